//! Batch run over scene manifests: decode, match, fuse, evaluate.
//!
//! Frames are processed on a bounded worker pool. Results are collected in
//! manifest order and reduced sequentially, so the aggregate report does not
//! depend on the number of workers.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::decode::{decode_bottom_up, DecodeParams};
use crate::error::{Error, Result};
use crate::fuse::{pairs_from_match, Fusion, MlpFuser, MlpWeights};
use crate::io::{write_canonical_json, write_json};
use crate::manifest::LoadedManifest;
use crate::matching::{match_pose_sets, MatchParams, MatchResult};
use crate::metrics::{evaluate_frame, FrameEval, MetricAccumulator, MetricParams, MetricReport};
use crate::types::{Pose3D, PoseSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FuseStrategy {
    Hard,
    Linear,
    Mlp,
}

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub decode: DecodeParams,
    pub matching: MatchParams,
    pub strategy: FuseStrategy,
    /// Required for [`FuseStrategy::Mlp`].
    pub mlp: Option<MlpWeights>,
    pub mlp_similarity: bool,
    /// The root index is taken from each frame's skeleton.
    pub metrics: MetricParams,
    pub out_dir: Option<PathBuf>,
    pub keep_going: bool,
    /// Worker count; 0 lets the pool choose.
    pub threads: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            decode: DecodeParams::default(),
            matching: MatchParams::default(),
            strategy: FuseStrategy::Hard,
            mlp: None,
            mlp_similarity: false,
            metrics: MetricParams::new(0),
            out_dir: None,
            keep_going: false,
            threads: 0,
        }
    }
}

impl PipelineConfig {
    fn fusion(&self, root: usize) -> Result<Fusion> {
        Ok(match self.strategy {
            FuseStrategy::Hard => Fusion::Hard { root },
            FuseStrategy::Linear => Fusion::Linear,
            FuseStrategy::Mlp => {
                let weights = self
                    .mlp
                    .clone()
                    .ok_or_else(|| Error::InvalidArgument("mlp fusion needs a weight bundle".into()))?;
                Fusion::Mlp(Box::new(MlpFuser {
                    weights,
                    root,
                    with_similarity: self.mlp_similarity,
                }))
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameOutput {
    pub frame_id: String,
    pub sequence_id: String,
    pub matching: MatchResult,
    pub fused: Vec<Pose3D>,
    /// Present when the manifest names ground truth.
    pub eval: Option<FrameEval>,
}

/// Per-frame file outputs.
pub fn fused_file(frame_id: &str) -> String {
    format!("{frame_id}.fused.json")
}

pub fn match_file(frame_id: &str) -> String {
    format!("{frame_id}.match.json")
}

pub const REPORT_FILE: &str = "report.json";

fn staged<T>(frame: &str, stage: &'static str, r: Result<T>) -> Result<T> {
    r.map_err(|e| Error::Stage {
        frame: frame.to_owned(),
        stage,
        source: Box::new(e),
    })
}

/// Runs every stage on one manifest. Per-frame outputs are written to
/// `cfg.out_dir` if set.
pub fn process_frame(manifest: &Path, cfg: &PipelineConfig) -> Result<FrameOutput> {
    let fallback_id = manifest.display().to_string();
    let m = staged(&fallback_id, "load", LoadedManifest::load(manifest))?;
    let id = m.frame_id();
    let skeleton = staged(&id, "load", m.skeleton())?;
    let k = skeleton.joint_count();
    let root = skeleton.root_index();
    let maps = staged(&id, "load", m.maps(&skeleton))?;
    let topdown = staged(&id, "load", m.topdown(k))?.unwrap_or_default();
    let gt = staged(&id, "load", m.ground_truth(k))?;

    let bottom_up = staged(&id, "decode", decode_bottom_up(&maps, &m.manifest.camera, &skeleton, &cfg.decode))?;
    let matching = staged(&id, "match", match_pose_sets(&bottom_up, &topdown, &cfg.matching))?;
    let fused = staged(&id, "fuse", {
        pairs_from_match(&bottom_up, &topdown, &matching)
            .and_then(|pairs| cfg.fusion(root).and_then(|f| f.apply_all(&pairs)))
    })?;
    let eval = match &gt {
        Some(gt) => {
            let params = MetricParams {
                root,
                ..cfg.metrics.clone()
            };
            Some(staged(&id, "eval", evaluate_frame(&fused, gt, &params))?)
        }
        None => None,
    };
    if let Some(dir) = &cfg.out_dir {
        staged(&id, "write", write_json(dir.join(match_file(&id)), &matching))?;
        staged(&id, "write", write_json(dir.join(fused_file(&id)), &PoseSet::new(fused.clone())))?;
    }
    Ok(FrameOutput {
        frame_id: id,
        sequence_id: m.manifest.sequence_id.clone(),
        matching,
        fused,
        eval,
    })
}

#[derive(Debug)]
pub struct PipelineOutcome {
    /// `None` when no successful frame had ground truth.
    pub report: Option<MetricReport>,
    pub frames_ok: usize,
    /// Failed frames in manifest order.
    pub failures: Vec<Error>,
}

impl PipelineOutcome {
    pub fn is_partial(&self) -> bool {
        !self.failures.is_empty()
    }
}

/// Processes all manifests. Without `keep_going` the first failure (in
/// manifest order) is returned and no report is written. The aggregate
/// report goes to `out_dir/report.json` after all per-frame outputs.
pub fn run_pipeline(manifests: &[PathBuf], cfg: &PipelineConfig) -> Result<PipelineOutcome> {
    if let Some(dir) = &cfg.out_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::from(e).at(dir))?;
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("worker pool: {e}")))?;
    let results: Vec<Result<FrameOutput>> = pool.install(|| {
        use rayon::prelude::*;
        manifests.par_iter().map(|m| process_frame(m, cfg)).collect()
    });

    let mut acc = MetricAccumulator::new(cfg.metrics.clone());
    let mut any_eval = false;
    let mut frames_ok = 0;
    let mut failures = Vec::new();
    for r in results {
        match r {
            Ok(out) => {
                frames_ok += 1;
                if let Some(ev) = &out.eval {
                    acc.add(Some(&out.sequence_id), ev);
                    any_eval = true;
                }
            }
            Err(e) if cfg.keep_going => failures.push(e),
            Err(e) => return Err(e),
        }
    }
    let report = if any_eval { Some(acc.finish()?) } else { None };
    if let (Some(dir), Some(report)) = (&cfg.out_dir, &report) {
        write_canonical_json(dir.join(REPORT_FILE), report)?;
    }
    Ok(PipelineOutcome {
        report,
        frames_ok,
        failures,
    })
}
