//! Directed joint adjacency for graph refinement of person-centric poses.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::skeleton::Skeleton;
use crate::tensor::Tensor;

/// `K x K` weights; `values[i][j]` is the weight from joint `i` to joint `j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Adjacency {
    pub values: Vec<Vec<f64>>,
}

impl Adjacency {
    pub fn joint_count(&self) -> usize {
        self.values.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i][j]
    }
}

/// `A[i][j] = max(H_i) * exp(-hops(i, j))`, so `A[i][i] = max(H_i)`.
/// The raw channel maximum is used without thresholding.
pub fn gcn_adjacency(heatmaps: &Tensor, skeleton: &Skeleton) -> Result<Adjacency> {
    let (k, _, _) = heatmaps.chw()?;
    if k != skeleton.joint_count() {
        return Err(Error::JointCountMismatch {
            left: k,
            right: skeleton.joint_count(),
        });
    }
    let mut values = vec![vec![0.0; k]; k];
    for (i, row) in values.iter_mut().enumerate() {
        let peak = heatmaps.channel(i).iter().copied().fold(f32::NEG_INFINITY, f32::max) as f64;
        for (j, a) in row.iter_mut().enumerate() {
            let hops = skeleton.hop_distance(i, j)?;
            *a = if hops == 0 { peak } else { peak * (-(hops as f64)).exp() };
        }
    }
    Ok(Adjacency { values })
}
