//! Evaluation of predicted camera-centric poses against ground truth.
//!
//! Only joints with positive ground-truth confidence are evaluated. Set-level
//! metrics work on an [`EvalPairing`] between predicted and ground-truth
//! persons; ground-truth persons left unmatched count as fully incorrect.

mod procrustes;
mod report;

pub use procrustes::{align_similarity, Similarity};
pub use report::{evaluate_frame, FrameEval, MetricAccumulator, MetricParams, MetricReport, ReportCounts, SequenceReport};

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::assignment::{hungarian_assign, min_cost_assignment, SimMatrix};
use crate::error::{Error, Result};
use crate::geometry::project_point;
use crate::types::{CameraIntrinsics, Pose3D};

/// PCK thresholds averaged by [`auc_rel`]: 0, 5, ..., 150 mm.
pub const AUC_THRESHOLDS_MM: [f64; 31] = {
    let mut t = [0.0; 31];
    let mut i = 0;
    while i < 31 {
        t[i] = 5.0 * i as f64;
        i += 1;
    }
    t
};

fn check_k(pred: &Pose3D, gt: &Pose3D) -> Result<()> {
    if pred.joint_count() != gt.joint_count() {
        return Err(Error::JointCountMismatch {
            left: pred.joint_count(),
            right: gt.joint_count(),
        });
    }
    Ok(())
}

fn visible(gt: &Pose3D) -> impl Iterator<Item = usize> + '_ {
    (0..gt.joint_count()).filter(|&k| gt.is_visible(k))
}

/// Root-aligned joint errors over ground-truth-visible joints.
fn aligned_errors<'a>(pred: &'a Pose3D, gt: &'a Pose3D, root: usize) -> impl Iterator<Item = f64> + 'a {
    let (pr, gr) = (pred.joints[root], gt.joints[root]);
    visible(gt).map(move |k| ((pred.joints[k] - pr) - (gt.joints[k] - gr)).norm())
}

fn absolute_errors<'a>(pred: &'a Pose3D, gt: &'a Pose3D) -> impl Iterator<Item = f64> + 'a {
    visible(gt).map(move |k| (pred.joints[k] - gt.joints[k]).norm())
}

/// Mean joint distance after translating `pred` so the roots coincide.
pub fn mpjpe(pred: &Pose3D, gt: &Pose3D, root: usize) -> Result<f64> {
    check_k(pred, gt)?;
    let (sum, n) = aligned_errors(pred, gt, root).fold((0.0, 0usize), |(s, n), e| (s + e, n + 1));
    if n == 0 {
        return Err(Error::NoVisibleJoints);
    }
    Ok(sum / n as f64)
}

/// Sum of joint distances after similarity alignment of `pred` onto `gt`, and
/// the number of joints.
fn pa_errors(pred: &Pose3D, gt: &Pose3D) -> Result<(f64, usize)> {
    check_k(pred, gt)?;
    let idx: Vec<usize> = visible(gt).collect();
    if idx.is_empty() {
        return Err(Error::NoVisibleJoints);
    }
    let src: Vec<Vector3<f64>> = idx.iter().map(|&k| pred.joints[k]).collect();
    let dst: Vec<Vector3<f64>> = idx.iter().map(|&k| gt.joints[k]).collect();
    let t = align_similarity(&src, &dst)?;
    let sum = src.iter().zip(&dst).map(|(s, d)| (t.apply(s) - d).norm()).sum();
    Ok((sum, idx.len()))
}

/// MPJPE after the least-squares similarity alignment (rotation, uniform
/// scale, translation) of `pred` onto `gt`.
pub fn pa_mpjpe(pred: &Pose3D, gt: &Pose3D) -> Result<f64> {
    let (sum, n) = pa_errors(pred, gt)?;
    Ok(sum / n as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum Pairing {
    /// Minimum total root distance; pairs farther than `gate_mm` are dropped.
    Root3d { gate_mm: f64 },
    /// Maximum total mean 2D OKS of the projections; pairs below `min_oks`
    /// are dropped.
    Oks2d { camera: CameraIntrinsics, min_oks: f64 },
}

impl Default for Pairing {
    fn default() -> Self {
        Pairing::Root3d { gate_mm: 500.0 }
    }
}

/// Falloff of the 2D OKS used by [`Pairing::Oks2d`], relative to the square
/// root of the ground-truth box area.
pub const OKS2D_KAPPA: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct EvalPairing {
    /// `(pred_index, gt_index)`, sorted by prediction.
    pub matched: Vec<(usize, usize)>,
    pub unmatched_pred: Vec<usize>,
    pub unmatched_gt: Vec<usize>,
}

impl EvalPairing {
    fn from_pairs(n_pred: usize, n_gt: usize, mut matched: Vec<(usize, usize)>) -> Self {
        matched.sort_unstable();
        let mut pred_used = vec![false; n_pred];
        let mut gt_used = vec![false; n_gt];
        for &(p, g) in &matched {
            pred_used[p] = true;
            gt_used[g] = true;
        }
        EvalPairing {
            matched,
            unmatched_pred: (0..n_pred).filter(|&p| !pred_used[p]).collect(),
            unmatched_gt: (0..n_gt).filter(|&g| !gt_used[g]).collect(),
        }
    }
}

fn mean_oks_2d(pred: &Pose3D, gt: &Pose3D, cam: &CameraIntrinsics) -> f64 {
    let project = |p: &Vector3<f64>| (p.z > 0.0).then(|| project_point(p, cam));
    let gt2d: Vec<(usize, Vector2<f64>)> =
        visible(gt).filter_map(|k| project(&gt.joints[k]).map(|p| (k, p))).collect();
    if gt2d.is_empty() {
        return 0.0;
    }
    let (mut lo, mut hi) = (gt2d[0].1, gt2d[0].1);
    for (_, p) in &gt2d {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    let area = ((hi.x - lo.x) * (hi.y - lo.y)).max(1.0);
    let denom = 2.0 * area * OKS2D_KAPPA * OKS2D_KAPPA;
    let sum: f64 = gt2d
        .iter()
        .map(|(k, g)| project(&pred.joints[*k]).map_or(0.0, |p| (-(p - g).norm_squared() / denom).exp()))
        .sum();
    sum / gt2d.len() as f64
}

/// One-to-one assignment of predictions to ground-truth persons.
pub fn pair_with_gt(pred: &[Pose3D], gt: &[Pose3D], pairing: &Pairing, root: usize) -> Result<EvalPairing> {
    if let Some(p) = pred.iter().chain(gt).find(|p| root >= p.joint_count()) {
        return Err(Error::IndexOutOfRange {
            index: root,
            count: p.joint_count(),
        });
    }
    let matched = match *pairing {
        Pairing::Root3d { gate_mm } => {
            let cost: Vec<f64> = pred
                .iter()
                .flat_map(|p| gt.iter().map(move |g| (p.joints[root] - g.joints[root]).norm()))
                .collect();
            min_cost_assignment(pred.len(), gt.len(), &cost)?
                .into_iter()
                .filter(|&(p, g)| cost[p * gt.len() + g] <= gate_mm)
                .collect()
        }
        Pairing::Oks2d { camera, min_oks } => {
            let mut values = Vec::with_capacity(pred.len() * gt.len());
            for p in pred {
                for g in gt {
                    check_k(p, g)?;
                    values.push(mean_oks_2d(p, g, &camera));
                }
            }
            let sim = SimMatrix::new(pred.len(), gt.len(), values)?;
            hungarian_assign(&sim)?
                .into_iter()
                .filter(|&(p, g)| sim.get(p, g) >= min_oks)
                .collect()
        }
    };
    Ok(EvalPairing::from_pairs(pred.len(), gt.len(), matched))
}

/// Correct and total joint counts; unmatched ground truth counts as wrong.
fn tally(
    pred: &[Pose3D],
    gt: &[Pose3D],
    pairing: &EvalPairing,
    mut correct: impl FnMut(&Pose3D, &Pose3D) -> Result<usize>,
) -> Result<(usize, usize)> {
    if gt.is_empty() {
        return Err(Error::EmptyGroundTruth);
    }
    let total = gt.iter().map(|g| visible(g).count()).sum();
    let mut hits = 0;
    for &(p, g) in &pairing.matched {
        check_k(&pred[p], &gt[g])?;
        hits += correct(&pred[p], &gt[g])?;
    }
    Ok((hits, total))
}

fn percent((hits, total): (usize, usize)) -> f64 {
    if total == 0 {
        0.0
    } else {
        100.0 * hits as f64 / total as f64
    }
}

fn check_threshold(t: f64) -> Result<()> {
    if !(t >= 0.0) {
        return Err(Error::Domain {
            what: "distance threshold",
            value: t,
        });
    }
    Ok(())
}

fn pck_counts(pred: &[Pose3D], gt: &[Pose3D], pairing: &EvalPairing, threshold_mm: f64, root: usize) -> Result<(usize, usize)> {
    tally(pred, gt, pairing, |p, g| Ok(aligned_errors(p, g, root).filter(|e| *e <= threshold_mm).count()))
}

fn pck_abs_counts(pred: &[Pose3D], gt: &[Pose3D], pairing: &EvalPairing, threshold_mm: f64) -> Result<(usize, usize)> {
    tally(pred, gt, pairing, |p, g| Ok(absolute_errors(p, g).filter(|e| *e <= threshold_mm).count()))
}

/// Percentage of joints within `threshold_mm` of ground truth after root
/// alignment (inclusive).
pub fn pck(pred: &[Pose3D], gt: &[Pose3D], pairing: &EvalPairing, threshold_mm: f64, root: usize) -> Result<f64> {
    check_threshold(threshold_mm)?;
    pck_counts(pred, gt, pairing, threshold_mm, root).map(percent)
}

/// [`pck`] on raw camera-centric coordinates.
pub fn pck_abs(pred: &[Pose3D], gt: &[Pose3D], pairing: &EvalPairing, threshold_mm: f64) -> Result<f64> {
    check_threshold(threshold_mm)?;
    pck_abs_counts(pred, gt, pairing, threshold_mm).map(percent)
}

/// Mean of [`pck`] over [`AUC_THRESHOLDS_MM`].
pub fn auc_rel(pred: &[Pose3D], gt: &[Pose3D], pairing: &EvalPairing, root: usize) -> Result<f64> {
    let mut sum = 0.0;
    for t in AUC_THRESHOLDS_MM {
        sum += pck(pred, gt, pairing, t, root)?;
    }
    Ok(sum / AUC_THRESHOLDS_MM.len() as f64)
}

/// `(score, is_true_positive)` for each prediction in descending score
/// order. Each prediction claims the nearest unclaimed ground-truth root
/// within `threshold_mm`. Scores are the predicted root confidences.
fn root_detections(pred: &[Pose3D], gt: &[Pose3D], threshold_mm: f64, root: usize) -> Vec<(f64, bool)> {
    let mut order: Vec<usize> = (0..pred.len()).collect();
    order.sort_by(|&a, &b| pred[b].confidence[root].total_cmp(&pred[a].confidence[root]));
    let mut claimed = vec![false; gt.len()];
    order
        .into_iter()
        .map(|i| {
            let r = pred[i].joints[root];
            let best = (0..gt.len())
                .filter(|&g| !claimed[g])
                .map(|g| (g, (gt[g].joints[root] - r).norm()))
                .filter(|&(_, d)| d <= threshold_mm)
                .min_by(|a, b| a.1.total_cmp(&b.1));
            if let Some((g, _)) = best {
                claimed[g] = true;
            }
            (pred[i].confidence[root], best.is_some())
        })
        .collect()
}

/// All-point interpolated area under the precision-recall curve.
/// Detections are ranked by descending score; ties keep input order.
pub fn average_precision(detections: &[(f64, bool)], n_gt: usize) -> Result<f64> {
    if n_gt == 0 {
        return Err(Error::EmptyGroundTruth);
    }
    let mut ranked: Vec<&(f64, bool)> = detections.iter().collect();
    ranked.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut tp = 0usize;
    let mut curve = Vec::with_capacity(ranked.len());
    for (i, (_, hit)) in ranked.iter().enumerate() {
        tp += *hit as usize;
        curve.push((tp as f64 / n_gt as f64, tp as f64 / (i + 1) as f64));
    }
    // precision envelope, right to left
    for i in (0..curve.len().saturating_sub(1)).rev() {
        curve[i].1 = curve[i].1.max(curve[i + 1].1);
    }
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for (recall, precision) in curve {
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    Ok(ap)
}

/// Average precision of root localization at `threshold_mm` (250 mm for
/// the 25 cm variant).
pub fn ap_root(pred: &[Pose3D], gt: &[Pose3D], threshold_mm: f64, root: usize) -> Result<f64> {
    check_threshold(threshold_mm)?;
    if gt.is_empty() {
        return Err(Error::EmptyGroundTruth);
    }
    average_precision(&root_detections(pred, gt, threshold_mm, root), gt.len())
}

/// `(true positives, predicted joints, ground-truth joints)`. A predicted
/// joint exists when its confidence is positive; it is a true positive when
/// its person is paired and it lies strictly closer than `threshold_mm` to
/// a visible ground-truth joint.
fn f1_counts(pred: &[Pose3D], gt: &[Pose3D], pairing: &EvalPairing, threshold_mm: f64) -> Result<(usize, usize, usize)> {
    let (tp, n_gt) = tally(pred, gt, pairing, |p, g| {
        Ok(visible(g)
            .filter(|&k| p.is_visible(k) && (p.joints[k] - g.joints[k]).norm() < threshold_mm)
            .count())
    })?;
    let n_pred = pred.iter().map(|p| visible(p).count()).sum();
    Ok((tp, n_pred, n_gt))
}

fn f1_from((tp, n_pred, n_gt): (usize, usize, usize)) -> f64 {
    if tp == 0 {
        0.0
    } else {
        2.0 * tp as f64 / (n_pred + n_gt) as f64
    }
}

/// Joint-level F1 at a camera-centric distance threshold given in metres.
pub fn f1_at(pred: &[Pose3D], gt: &[Pose3D], pairing: &EvalPairing, threshold_m: f64) -> Result<f64> {
    if !(threshold_m > 0.0) {
        return Err(Error::Domain {
            what: "F1 threshold",
            value: threshold_m,
        });
    }
    f1_counts(pred, gt, pairing, threshold_m * 1000.0).map(f1_from)
}
