use super::mlp::{sigmoid, MlpWeights};
use crate::error::{Error, Result};
use crate::types::Pose3D;

/// Plausibility of a single person-centric pose, in `[0, 1]`.
pub trait PoseScorer {
    fn score(&self, pose: &Pose3D) -> Result<f64>;
}

/// Plausibility of two camera-centric poses seen together, in `[0, 1]`.
pub trait PairScorer {
    fn score(&self, a: &Pose3D, b: &Pose3D) -> Result<f64>;
}

impl<F: Fn(&Pose3D) -> f64> PoseScorer for F {
    fn score(&self, pose: &Pose3D) -> Result<f64> {
        Ok(self(pose))
    }
}

impl<F: Fn(&Pose3D, &Pose3D) -> f64> PairScorer for F {
    fn score(&self, a: &Pose3D, b: &Pose3D) -> Result<f64> {
        Ok(self(a, b))
    }
}

/// Sigmoid of a network applied to the root-relative joints.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpPoseScorer {
    pub weights: MlpWeights,
    pub root: usize,
}

impl PoseScorer for MlpPoseScorer {
    fn score(&self, pose: &Pose3D) -> Result<f64> {
        let input: Vec<f64> = pose.root_relative(self.root).iter().flat_map(|j| [j.x, j.y, j.z]).collect();
        single_output(&self.weights, &input)
    }
}

/// Sigmoid of a network applied to both camera-centric poses, concatenated.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpPairScorer {
    pub weights: MlpWeights,
}

impl PairScorer for MlpPairScorer {
    fn score(&self, a: &Pose3D, b: &Pose3D) -> Result<f64> {
        let input: Vec<f64> = a.joints.iter().chain(&b.joints).flat_map(|j| [j.x, j.y, j.z]).collect();
        single_output(&self.weights, &input)
    }
}

fn single_output(weights: &MlpWeights, input: &[f64]) -> Result<f64> {
    let out = weights.forward(input)?;
    match out.as_slice() {
        [v] => Ok(sigmoid(*v)),
        _ => Err(Error::DimMismatch(format!("scorer network has {} outputs", out.len()))),
    }
}

fn checked(v: f64) -> Result<f64> {
    if (0.0..=1.0).contains(&v) {
        Ok(v)
    } else {
        Err(Error::ScorerOutOfRange(v))
    }
}

/// `C = 0.25 (D1(a) + D1(b)) + 0.5 D2(a, b)`.
pub fn discriminator_score(d1: &impl PoseScorer, d2: &impl PairScorer, a: &Pose3D, b: &Pose3D) -> Result<f64> {
    let (sa, sb) = (checked(d1.score(a)?)?, checked(d1.score(b)?)?);
    let sab = checked(d2.score(a, b)?)?;
    Ok(0.25 * (sa + sb) + 0.5 * sab)
}

/// `ln C_real + ln(1 - C_fake)`, as written; the caller picks the direction
/// of optimization.
pub fn discriminator_loss(c_real: f64, c_fake: f64) -> Result<f64> {
    if !(c_real > 0.0 && c_real <= 1.0) {
        return Err(Error::Domain {
            what: "real score",
            value: c_real,
        });
    }
    if !(0.0..1.0).contains(&c_fake) {
        return Err(Error::Domain {
            what: "fake score",
            value: c_fake,
        });
    }
    Ok(c_real.ln() + (1.0 - c_fake).ln())
}
