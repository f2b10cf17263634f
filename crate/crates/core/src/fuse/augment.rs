use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::PosePair;
use crate::error::{Error, Result};
use crate::types::Pose3D;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentParams {
    pub mask_prob: f64,
    /// Per-axis standard deviation of the joint shift, mm.
    pub shift_sigma: [f64; 3],
    pub zero_prob: f64,
}

impl Default for AugmentParams {
    fn default() -> Self {
        AugmentParams {
            mask_prob: 0.2,
            shift_sigma: [20.0; 3],
            zero_prob: 0.1,
        }
    }
}

impl AugmentParams {
    fn validate(&self) -> Result<()> {
        for (what, p) in [("mask probability", self.mask_prob), ("zeroing probability", self.zero_prob)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Domain { what, value: p });
            }
        }
        if let Some(s) = self.shift_sigma.iter().find(|s| !(**s >= 0.0 && s.is_finite())) {
            return Err(Error::Domain {
                what: "shift sigma",
                value: *s,
            });
        }
        Ok(())
    }
}

fn augment_side(pose: &Pose3D, params: &AugmentParams, shift: &[Normal<f64>; 3], rng: &mut ChaCha8Rng) -> Pose3D {
    let mut out = pose.clone();
    for k in 0..out.joint_count() {
        // draw all four variates per joint so the stream layout is fixed
        let masked = rng.random::<f64>() < params.mask_prob;
        let d = [shift[0].sample(rng), shift[1].sample(rng), shift[2].sample(rng)];
        if masked {
            out.joints[k].fill(0.0);
            out.confidence[k] = 0.0;
        } else {
            for (axis, v) in d.iter().enumerate() {
                out.joints[k][axis] += v;
            }
        }
    }
    out
}

/// Training-time noise for a pose pair: per-joint masking, Gaussian shifts,
/// and with probability `zero_prob` replacing one side of a full pair by an
/// all-zero pose. Deterministic in `seed`.
pub fn augment_pair(pair: &PosePair, seed: u64, params: &AugmentParams) -> Result<PosePair> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shift = params.shift_sigma.map(|s| Normal::new(0.0, s).expect("validated sigma"));
    let mut td = pair.td.as_ref().map(|p| augment_side(p, params, &shift, &mut rng));
    let mut bu = pair.bu.as_ref().map(|p| augment_side(p, params, &shift, &mut rng));
    let zero = rng.random::<f64>() < params.zero_prob;
    let zero_td = rng.random::<bool>();
    if zero && td.is_some() && bu.is_some() {
        let k = pair.joint_count();
        if zero_td {
            td = Some(Pose3D::zeros(k));
        } else {
            bu = Some(Pose3D::zeros(k));
        }
    }
    Ok(PosePair {
        td,
        bu,
        similarity: pair.similarity,
    })
}
