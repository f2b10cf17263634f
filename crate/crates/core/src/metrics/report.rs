use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{
    average_precision, f1_counts, f1_from, pa_errors, pair_with_gt, pck_abs_counts, pck_counts, percent,
    root_detections, Pairing, AUC_THRESHOLDS_MM,
};
use crate::error::{Error, Result};
use crate::types::Pose3D;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricParams {
    pub root: usize,
    pub pairing: Pairing,
    pub pck_threshold_mm: f64,
    pub ap_threshold_mm: f64,
    pub f1_thresholds_m: Vec<f64>,
}

impl MetricParams {
    pub fn new(root: usize) -> Self {
        MetricParams {
            root,
            pairing: Pairing::default(),
            pck_threshold_mm: 150.0,
            ap_threshold_mm: 250.0,
            f1_thresholds_m: vec![0.4, 0.8, 1.2],
        }
    }
}

/// Raw counts and sums for one frame or a group of frames. Merging is exact:
/// reports are computed from the merged totals, never from per-frame means.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FrameEval {
    pub frames: usize,
    pub gt_persons: usize,
    pub pred_persons: usize,
    pub matched_persons: usize,
    pub gt_joints: usize,
    pub pck_hits: usize,
    pub pck_abs_hits: usize,
    pub auc_hits: Vec<usize>,
    pub mpjpe_sum: f64,
    pub mpjpe_joints: usize,
    pub pa_sum: f64,
    pub pa_joints: usize,
    pub pa_skipped: usize,
    /// Per F1 threshold: `(tp, predicted joints, ground-truth joints)`.
    pub f1: Vec<(usize, usize, usize)>,
    pub root_detections: Vec<(f64, bool)>,
}

impl FrameEval {
    pub fn merge(&mut self, other: &FrameEval) {
        if self.auc_hits.is_empty() {
            self.auc_hits = vec![0; other.auc_hits.len()];
        }
        if self.f1.is_empty() {
            self.f1 = vec![(0, 0, 0); other.f1.len()];
        }
        self.frames += other.frames;
        self.gt_persons += other.gt_persons;
        self.pred_persons += other.pred_persons;
        self.matched_persons += other.matched_persons;
        self.gt_joints += other.gt_joints;
        self.pck_hits += other.pck_hits;
        self.pck_abs_hits += other.pck_abs_hits;
        for (a, b) in self.auc_hits.iter_mut().zip(&other.auc_hits) {
            *a += b;
        }
        self.mpjpe_sum += other.mpjpe_sum;
        self.mpjpe_joints += other.mpjpe_joints;
        self.pa_sum += other.pa_sum;
        self.pa_joints += other.pa_joints;
        self.pa_skipped += other.pa_skipped;
        for (a, b) in self.f1.iter_mut().zip(&other.f1) {
            a.0 += b.0;
            a.1 += b.1;
            a.2 += b.2;
        }
        self.root_detections.extend_from_slice(&other.root_detections);
    }
}

/// Counts for one frame. A frame without ground truth contributes only its
/// predictions (as false positives).
pub fn evaluate_frame(pred: &[Pose3D], gt: &[Pose3D], params: &MetricParams) -> Result<FrameEval> {
    let root = params.root;
    let pairing = pair_with_gt(pred, gt, &params.pairing, root)?;
    let mut ev = FrameEval {
        frames: 1,
        gt_persons: gt.len(),
        pred_persons: pred.len(),
        matched_persons: pairing.matched.len(),
        auc_hits: vec![0; AUC_THRESHOLDS_MM.len()],
        f1: vec![(0, 0, 0); params.f1_thresholds_m.len()],
        root_detections: root_detections(pred, gt, params.ap_threshold_mm, root),
        ..FrameEval::default()
    };
    if gt.is_empty() {
        for (slot, _) in ev.f1.iter_mut().zip(&params.f1_thresholds_m) {
            slot.1 = pred.iter().map(|p| p.confidence.iter().filter(|c| **c > 0.0).count()).sum();
        }
        return Ok(ev);
    }
    (ev.pck_hits, ev.gt_joints) = pck_counts(pred, gt, &pairing, params.pck_threshold_mm, root)?;
    ev.pck_abs_hits = pck_abs_counts(pred, gt, &pairing, params.pck_threshold_mm)?.0;
    for (slot, t) in ev.auc_hits.iter_mut().zip(AUC_THRESHOLDS_MM) {
        *slot = pck_counts(pred, gt, &pairing, t, root)?.0;
    }
    for (slot, t) in ev.f1.iter_mut().zip(&params.f1_thresholds_m) {
        *slot = f1_counts(pred, gt, &pairing, t * 1000.0)?;
    }
    for &(p, g) in &pairing.matched {
        let (pred_p, gt_p) = (&pred[p], &gt[g]);
        let (pr, gr) = (pred_p.joints[root], gt_p.joints[root]);
        for k in (0..gt_p.joint_count()).filter(|&k| gt_p.is_visible(k)) {
            ev.mpjpe_sum += ((pred_p.joints[k] - pr) - (gt_p.joints[k] - gr)).norm();
            ev.mpjpe_joints += 1;
        }
        match pa_errors(pred_p, gt_p) {
            Ok((sum, n)) => {
                ev.pa_sum += sum;
                ev.pa_joints += n;
            }
            Err(Error::DegenerateAlignment(_) | Error::NoVisibleJoints) => ev.pa_skipped += 1,
            Err(e) => return Err(e),
        }
    }
    Ok(ev)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportCounts {
    pub frames: usize,
    pub gt_persons: usize,
    pub pred_persons: usize,
    pub matched_persons: usize,
    pub gt_joints: usize,
    /// Matched persons whose joints admit no well-posed alignment.
    pub pa_skipped_persons: usize,
}

/// Aggregate metrics. Distances in mm, `pck*`/`auc_rel` in percent,
/// `ap_root` and `f1_at` as fractions. Mean errors are `None` when no joint
/// was matched.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub mpjpe: Option<f64>,
    pub pa_mpjpe: Option<f64>,
    pub pck: f64,
    pub pck_abs: f64,
    pub auc_rel: f64,
    pub ap_root: f64,
    /// Keyed by the threshold in metres.
    pub f1_at: BTreeMap<String, f64>,
    pub pck_threshold_mm: f64,
    pub ap_threshold_mm: f64,
    pub counts: ReportCounts,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub per_sequence: BTreeMap<String, SequenceReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceReport {
    pub mpjpe: Option<f64>,
    pub pck: f64,
    pub pck_abs: f64,
    pub gt_persons: usize,
    pub frames: usize,
}

fn mean(sum: f64, n: usize) -> Option<f64> {
    (n > 0).then(|| sum / n as f64)
}

/// Reduces per-frame counts into a [`MetricReport`]. Frames must be added in
/// a fixed order for bit-identical float sums.
#[derive(Debug, Clone)]
pub struct MetricAccumulator {
    params: MetricParams,
    total: FrameEval,
    sequences: BTreeMap<String, FrameEval>,
}

impl MetricAccumulator {
    pub fn new(params: MetricParams) -> Self {
        MetricAccumulator {
            params,
            total: FrameEval::default(),
            sequences: BTreeMap::new(),
        }
    }

    pub fn add(&mut self, sequence: Option<&str>, frame: &FrameEval) {
        self.total.merge(frame);
        if let Some(s) = sequence {
            self.sequences.entry(s.to_owned()).or_default().merge(frame);
        }
    }

    pub fn finish(&self) -> Result<MetricReport> {
        let t = &self.total;
        if t.gt_persons == 0 {
            return Err(Error::EmptyGroundTruth);
        }
        let auc_rel = t.auc_hits.iter().map(|h| percent((*h, t.gt_joints))).sum::<f64>() / t.auc_hits.len() as f64;
        let f1_at = self
            .params
            .f1_thresholds_m
            .iter()
            .zip(&t.f1)
            .map(|(th, c)| (format!("{th}"), f1_from(*c)))
            .collect();
        let per_sequence = if self.sequences.len() > 1 {
            self.sequences
                .iter()
                .map(|(name, s)| {
                    let r = SequenceReport {
                        mpjpe: mean(s.mpjpe_sum, s.mpjpe_joints),
                        pck: percent((s.pck_hits, s.gt_joints)),
                        pck_abs: percent((s.pck_abs_hits, s.gt_joints)),
                        gt_persons: s.gt_persons,
                        frames: s.frames,
                    };
                    (name.clone(), r)
                })
                .collect()
        } else {
            BTreeMap::new()
        };
        Ok(MetricReport {
            mpjpe: mean(t.mpjpe_sum, t.mpjpe_joints),
            pa_mpjpe: mean(t.pa_sum, t.pa_joints),
            pck: percent((t.pck_hits, t.gt_joints)),
            pck_abs: percent((t.pck_abs_hits, t.gt_joints)),
            auc_rel,
            ap_root: average_precision(&t.root_detections, t.gt_persons)?,
            f1_at,
            pck_threshold_mm: self.params.pck_threshold_mm,
            ap_threshold_mm: self.params.ap_threshold_mm,
            counts: ReportCounts {
                frames: t.frames,
                gt_persons: t.gt_persons,
                pred_persons: t.pred_persons,
                matched_persons: t.matched_persons,
                gt_joints: t.gt_joints,
                pa_skipped_persons: t.pa_skipped,
            },
            per_sequence,
        })
    }
}
