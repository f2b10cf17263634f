//! Fusion of matched top-down / bottom-up pose pairs.

mod augment;
mod discriminator;
mod mlp;

pub use augment::{augment_pair, AugmentParams};
pub use discriminator::{discriminator_loss, discriminator_score, MlpPairScorer, MlpPoseScorer, PairScorer, PoseScorer};
pub use mlp::{mlp_forward, sigmoid, Activation, Layer, MlpWeights};

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matching::MatchResult;
use crate::types::Pose3D;

/// A top-down and a bottom-up estimate of the same person. At least one side
/// is present and both sides share the joint count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosePair {
    pub td: Option<Pose3D>,
    pub bu: Option<Pose3D>,
    pub similarity: f64,
}

impl PosePair {
    pub fn new(td: Option<Pose3D>, bu: Option<Pose3D>, similarity: f64) -> Result<Self> {
        match (&td, &bu) {
            (None, None) => return Err(Error::InvalidArgument("pose pair with no side".into())),
            (Some(t), Some(b)) if t.joint_count() != b.joint_count() => {
                return Err(Error::JointCountMismatch {
                    left: t.joint_count(),
                    right: b.joint_count(),
                })
            }
            _ => {}
        }
        Ok(PosePair { td, bu, similarity })
    }

    pub fn joint_count(&self) -> usize {
        self.td.as_ref().or(self.bu.as_ref()).map_or(0, Pose3D::joint_count)
    }
}

/// Pairs in match order, then unmatched top-down poses, then unmatched
/// bottom-up poses.
pub fn pairs_from_match(bu: &[Pose3D], td: &[Pose3D], m: &MatchResult) -> Result<Vec<PosePair>> {
    let mut out = Vec::with_capacity(m.pairs.len() + m.unmatched_bu.len() + m.unmatched_td.len());
    for p in &m.pairs {
        out.push(PosePair::new(
            Some(td[p.td_index].clone()),
            Some(bu[p.bu_index].clone()),
            p.similarity,
        )?);
    }
    for &t in &m.unmatched_td {
        out.push(PosePair::new(Some(td[t].clone()), None, 0.0)?);
    }
    for &b in &m.unmatched_bu {
        out.push(PosePair::new(None, Some(bu[b].clone()), 0.0)?);
    }
    Ok(out)
}

/// Top-down relative pose placed at the bottom-up root depth. The root's
/// (X, Y) is rescaled by `Z_bu / Z_td` so its image position is unchanged.
///
/// Panics if `root` is out of range.
pub fn hard_fuse(pair: &PosePair, root: usize) -> Pose3D {
    let (td, bu) = match (&pair.td, &pair.bu) {
        (Some(t), Some(b)) => (t, b),
        (Some(t), None) => return t.clone(),
        (None, Some(b)) => return b.clone(),
        (None, None) => unreachable!("PosePair invariant"),
    };
    let td_root = td.joints[root];
    let z = bu.joints[root].z;
    let new_root = if td_root.z > 0.0 {
        let ratio = z / td_root.z;
        Vector3::new(td_root.x * ratio, td_root.y * ratio, z)
    } else {
        Vector3::new(td_root.x, td_root.y, z)
    };
    let shift = new_root - td_root;
    let mut out = td.translated(&shift);
    out.joints[root] = new_root;
    out
}

/// Confidence-weighted mean per joint. Joints where both confidences are
/// zero keep the top-down value. Output confidence is the larger of the two.
pub fn linear_fuse(pair: &PosePair) -> Pose3D {
    let (td, bu) = match (&pair.td, &pair.bu) {
        (Some(t), Some(b)) => (t, b),
        (Some(t), None) => return t.clone(),
        (None, Some(b)) => return b.clone(),
        (None, None) => unreachable!("PosePair invariant"),
    };
    let mut out = td.clone();
    for k in 0..td.joint_count() {
        let (ct, cb) = (td.confidence[k], bu.confidence[k]);
        if ct + cb > 0.0 {
            // td + w (bu - td) stays on the segment and is exact at w = 0, 1
            let w = cb / (ct + cb);
            out.joints[k] = if w == 1.0 {
                bu.joints[k]
            } else {
                td.joints[k] + (bu.joints[k] - td.joints[k]) * w
            };
        }
        out.confidence[k] = ct.max(cb);
    }
    out
}

/// Input vector of the integration network:
/// `[TD xyz; TD confidence; BU xyz; BU confidence]` with an absent side
/// zero-filled, optionally followed by the pair similarity.
pub fn integration_input(pair: &PosePair, with_similarity: bool) -> Vec<f64> {
    let k = pair.joint_count();
    let mut v = Vec::with_capacity(8 * k + 1);
    for side in [&pair.td, &pair.bu] {
        match side {
            Some(p) => {
                v.extend(p.joints.iter().flat_map(|j| [j.x, j.y, j.z]));
                v.extend_from_slice(&p.confidence);
            }
            None => v.extend(std::iter::repeat_n(0.0, 4 * k)),
        }
    }
    if with_similarity {
        v.push(pair.similarity);
    }
    v
}

/// Learned integration. The network predicts a per-joint residual that is
/// added to [`hard_fuse`], so an all-zero network reproduces it.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpFuser {
    pub weights: MlpWeights,
    pub root: usize,
    pub with_similarity: bool,
}

impl MlpFuser {
    pub fn fuse(&self, pair: &PosePair) -> Result<Pose3D> {
        let k = pair.joint_count();
        if self.weights.output_dim() != 3 * k {
            return Err(Error::DimMismatch(format!(
                "network outputs {} values for {k} joints",
                self.weights.output_dim()
            )));
        }
        let residual = mlp_forward(&self.weights, &integration_input(pair, self.with_similarity))?;
        let mut out = hard_fuse(pair, self.root);
        for (j, r) in out.joints.iter_mut().zip(residual.chunks_exact(3)) {
            *j += Vector3::new(r[0], r[1], r[2]);
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Fusion {
    Hard { root: usize },
    Linear,
    Mlp(Box<MlpFuser>),
}

impl Fusion {
    pub fn apply(&self, pair: &PosePair) -> Result<Pose3D> {
        match self {
            Fusion::Hard { root } => Ok(hard_fuse(pair, *root)),
            Fusion::Linear => Ok(linear_fuse(pair)),
            Fusion::Mlp(m) => m.fuse(pair),
        }
    }

    /// Fuses every pair in parallel; output order follows `pairs`.
    pub fn apply_all(&self, pairs: &[PosePair]) -> Result<Vec<Pose3D>> {
        pairs.par_iter().map(|p| self.apply(p)).collect()
    }
}

/// Mean squared joint distance `(1/K) sum_k |P_k - P~_k|^2`.
pub fn integration_loss(pred: &Pose3D, gt: &Pose3D) -> Result<f64> {
    if pred.joint_count() != gt.joint_count() {
        return Err(Error::JointCountMismatch {
            left: pred.joint_count(),
            right: gt.joint_count(),
        });
    }
    if pred.joint_count() == 0 {
        return Ok(0.0);
    }
    let sum: f64 = pred.joints.iter().zip(&gt.joints).map(|(a, b)| (a - b).norm_squared()).sum();
    Ok(sum / pred.joint_count() as f64)
}
