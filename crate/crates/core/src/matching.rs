//! Pairing of top-down and bottom-up camera-centric pose sets.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::assignment::{hungarian_assign, SimMatrix};
use crate::error::{Error, Result};
use crate::types::Pose3D;

pub const MIN_PERSON_SCALE_MM: f64 = 100.0;

/// Object keypoint similarity of two 3D joints: `exp(-d^2 / (2 s^2 sigma^2))`.
pub fn oks(a: &Vector3<f64>, b: &Vector3<f64>, s: f64, sigma: f64) -> Result<f64> {
    if !(s > 0.0) {
        return Err(Error::Domain { what: "OKS scale", value: s });
    }
    if !(sigma > 0.0) {
        return Err(Error::Domain { what: "OKS sigma", value: sigma });
    }
    Ok(oks_unchecked(a, b, s, sigma))
}

fn oks_unchecked(a: &Vector3<f64>, b: &Vector3<f64>, s: f64, sigma: f64) -> f64 {
    let d2 = (a - b).norm_squared();
    (-d2 / (2.0 * s * s * sigma * sigma)).exp()
}

/// Cube root of the axis-aligned bounding volume of the visible joints,
/// floored at [`MIN_PERSON_SCALE_MM`].
pub fn person_scale(pose: &Pose3D) -> f64 {
    let mut lo = Vector3::repeat(f64::INFINITY);
    let mut hi = Vector3::repeat(f64::NEG_INFINITY);
    for (j, p) in pose.joints.iter().enumerate() {
        if pose.is_visible(j) {
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
    }
    let extent = hi - lo;
    let volume = extent.x * extent.y * extent.z;
    if volume.is_finite() && volume > 0.0 {
        volume.cbrt().max(MIN_PERSON_SCALE_MM)
    } else {
        MIN_PERSON_SCALE_MM
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode", content = "value")]
pub enum ScaleMode {
    /// Scale taken from each top-down pose's bounding volume.
    PerPair,
    /// One scale (mm) for every pair.
    Global(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchParams {
    pub scale: ScaleMode,
    /// One falloff per joint, or a single value broadcast to all joints.
    pub sigmas: Vec<f64>,
    /// Minimum similarity for a pair to be kept; `None` means `0.1 * K`.
    pub threshold: Option<f64>,
}

impl Default for MatchParams {
    fn default() -> Self {
        MatchParams {
            scale: ScaleMode::PerPair,
            sigmas: vec![0.5],
            threshold: None,
        }
    }
}

impl MatchParams {
    fn sigma(&self, k: usize) -> f64 {
        if self.sigmas.len() == 1 {
            self.sigmas[0]
        } else {
            self.sigmas[k]
        }
    }

    fn validate(&self, k: usize) -> Result<()> {
        if self.sigmas.len() != 1 && self.sigmas.len() != k {
            return Err(Error::DimMismatch(format!(
                "{} sigmas for {k} joints",
                self.sigmas.len()
            )));
        }
        if let Some(s) = self.sigmas.iter().find(|s| !(**s > 0.0)) {
            return Err(Error::Domain { what: "OKS sigma", value: *s });
        }
        if let ScaleMode::Global(s) = self.scale {
            if !(s > 0.0) {
                return Err(Error::Domain { what: "OKS scale", value: s });
            }
        }
        Ok(())
    }

    pub fn threshold_for(&self, k: usize) -> f64 {
        self.threshold.unwrap_or(0.1 * k as f64)
    }
}

/// `Sim[i][j] = sum_k min(c_bu[i][k], c_td[j][k]) * OKS(bu[i][k], td[j][k])`.
pub fn sim_matrix(bu: &[Pose3D], td: &[Pose3D], params: &MatchParams) -> Result<SimMatrix> {
    let k = bu.first().or(td.first()).map_or(0, Pose3D::joint_count);
    if let Some(p) = bu.iter().chain(td).find(|p| p.joint_count() != k) {
        return Err(Error::JointCountMismatch {
            left: k,
            right: p.joint_count(),
        });
    }
    if k > 0 {
        params.validate(k)?;
    }
    let mut values = Vec::with_capacity(bu.len() * td.len());
    for b in bu {
        for t in td {
            let s = match params.scale {
                ScaleMode::PerPair => person_scale(t),
                ScaleMode::Global(s) => s,
            };
            let mut sim = 0.0;
            for j in 0..k {
                let w = b.confidence[j].min(t.confidence[j]);
                if w > 0.0 {
                    sim += w * oks_unchecked(&b.joints[j], &t.joints[j], s, params.sigma(j));
                }
            }
            values.push(sim);
        }
    }
    SimMatrix::new(bu.len(), td.len(), values)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchedPair {
    pub bu_index: usize,
    pub td_index: usize,
    pub similarity: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MatchResult {
    pub pairs: Vec<MatchedPair>,
    pub unmatched_bu: Vec<usize>,
    pub unmatched_td: Vec<usize>,
}

impl MatchResult {
    /// The same matching seen from the other side: pair indices swapped and
    /// unmatched lists exchanged.
    pub fn swapped(&self) -> MatchResult {
        let mut pairs: Vec<_> = self
            .pairs
            .iter()
            .map(|p| MatchedPair {
                bu_index: p.td_index,
                td_index: p.bu_index,
                similarity: p.similarity,
            })
            .collect();
        pairs.sort_by_key(|p| (p.bu_index, p.td_index));
        MatchResult {
            pairs,
            unmatched_bu: self.unmatched_td.clone(),
            unmatched_td: self.unmatched_bu.clone(),
        }
    }
}

/// Hungarian matching on the similarity matrix. Assigned pairs below the
/// threshold are split into unmatched entries on both sides.
pub fn match_from_sim(sim: &SimMatrix, threshold: f64) -> Result<MatchResult> {
    let assignment = hungarian_assign(sim)?;
    let mut bu_used = vec![false; sim.rows];
    let mut td_used = vec![false; sim.cols];
    let mut pairs = Vec::new();
    for (r, c) in assignment {
        let s = sim.get(r, c);
        if s >= threshold {
            bu_used[r] = true;
            td_used[c] = true;
            pairs.push(MatchedPair {
                bu_index: r,
                td_index: c,
                similarity: s,
            });
        }
    }
    pairs.sort_by_key(|p| (p.bu_index, p.td_index));
    Ok(MatchResult {
        pairs,
        unmatched_bu: (0..sim.rows).filter(|&r| !bu_used[r]).collect(),
        unmatched_td: (0..sim.cols).filter(|&c| !td_used[c]).collect(),
    })
}

pub fn match_pose_sets(bu: &[Pose3D], td: &[Pose3D], params: &MatchParams) -> Result<MatchResult> {
    let sim = sim_matrix(bu, td, params)?;
    let k = bu.first().or(td.first()).map_or(0, Pose3D::joint_count);
    match_from_sim(&sim, params.threshold_for(k))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pose(points: &[[f64; 3]], conf: f64) -> Pose3D {
        Pose3D::new(points.iter().map(|p| Vector3::from(*p)).collect(), vec![conf; points.len()]).unwrap()
    }

    #[test]
    fn oks_examples() {
        let o = Vector3::new(1.0, 2.0, 3.0);
        assert_eq!(oks(&o, &o, 150.0, 0.5).unwrap(), 1.0);
        let (s, sigma) = (120.0, 0.4);
        let d = (2.0f64).sqrt() * s * sigma;
        let v = oks(&o, &(o + Vector3::new(d, 0.0, 0.0)), s, sigma).unwrap();
        assert!((v - (-1.0f64).exp()).abs() < 1e-12);
        let v = oks(&o, &(o + Vector3::new(0.0, 1.0, 0.0)), 1.0, 0.5).unwrap();
        assert!((v - 0.1353352832366127).abs() < 1e-12);
        assert!(oks(&o, &o, 0.0, 0.5).is_err());
        assert!(oks(&o, &o, 1.0, -0.5).is_err());
    }

    #[test]
    fn person_scale_floor() {
        let flat = pose(&[[0.0, 0.0, 1000.0], [500.0, 500.0, 1000.0]], 1.0);
        assert_eq!(person_scale(&flat), MIN_PERSON_SCALE_MM);
        let cube = pose(&[[0.0, 0.0, 1000.0], [800.0, 1000.0, 1125.0]], 1.0);
        assert!((person_scale(&cube) - 100_000_000f64.cbrt()).abs() < 1e-9);
    }

    #[test]
    fn sim_examples() {
        let p = pose(&[[0.0, 0.0, 3000.0], [100.0, -400.0, 3100.0], [-50.0, 300.0, 2900.0]], 1.0);
        let s = sim_matrix(&[p.clone()], &[p.clone()], &MatchParams::default()).unwrap();
        assert_eq!(s.get(0, 0), 3.0);

        let a = pose(&[[0.0, 0.0, 3000.0]], 0.6);
        let b = pose(&[[0.0, 0.0, 3000.0]], 0.9);
        let s = sim_matrix(&[a], &[b], &MatchParams::default()).unwrap();
        assert_eq!(s.get(0, 0), 0.6);

        let short = pose(&[[0.0, 0.0, 1.0]], 1.0);
        assert!(matches!(
            sim_matrix(&[p], &[short], &MatchParams::default()),
            Err(Error::JointCountMismatch { .. })
        ));
    }

    #[test]
    fn invisible_joints_contribute_nothing() {
        let mut a = pose(&[[0.0, 0.0, 3000.0], [0.0, 0.0, 3000.0]], 1.0);
        let b = a.clone();
        a.confidence[1] = 0.0;
        a.joints[1].x = 1e6;
        let s = sim_matrix(&[a], &[b], &MatchParams::default()).unwrap();
        assert_eq!(s.get(0, 0), 1.0);
    }

    #[test]
    fn match_empty_and_far() {
        let p = pose(&[[0.0, 0.0, 3000.0], [100.0, 0.0, 3000.0]], 1.0);
        let m = match_pose_sets(&[], &[p.clone(), p.clone()], &MatchParams::default()).unwrap();
        assert!(m.pairs.is_empty());
        assert_eq!(m.unmatched_td, vec![0, 1]);

        let far = p.translated(&Vector3::new(10_000.0, 0.0, 0.0));
        let params = MatchParams {
            threshold: Some(0.5),
            ..MatchParams::default()
        };
        let m = match_pose_sets(&[far], &[p], &params).unwrap();
        assert!(m.pairs.is_empty());
        assert_eq!(m.unmatched_bu, vec![0]);
        assert_eq!(m.unmatched_td, vec![0]);
    }

    #[test]
    fn default_threshold_scales_with_joints() {
        let params = MatchParams::default();
        assert!((params.threshold_for(16) - 1.6).abs() < 1e-12);
        assert_eq!(MatchParams { threshold: Some(0.3), ..params }.threshold_for(16), 0.3);
    }

    #[test]
    fn per_joint_sigmas() {
        let a = pose(&[[0.0, 0.0, 3000.0], [0.0, 0.0, 3000.0]], 1.0);
        let b = pose(&[[0.0, 0.0, 3000.0], [0.0, 100.0, 3000.0]], 1.0);
        let params = MatchParams {
            scale: ScaleMode::Global(100.0),
            sigmas: vec![0.5, 1.0],
            threshold: None,
        };
        let s = sim_matrix(&[a.clone()], &[b.clone()], &params).unwrap();
        assert!((s.get(0, 0) - (1.0 + (-0.5f64).exp())).abs() < 1e-12);
        let bad = MatchParams {
            sigmas: vec![0.5, 0.5, 0.5],
            ..params
        };
        assert!(sim_matrix(&[a], &[b], &bad).is_err());
    }
}
