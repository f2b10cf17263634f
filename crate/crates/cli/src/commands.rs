use std::path::Path;

use posefuse::assignment::SimMatrix;
use posefuse::decode::{decode_bottom_up, DecodeParams};
use posefuse::fuse::{pairs_from_match, Fusion, MlpFuser, MlpWeights};
use posefuse::geometry::{multi_perspective_error, reprojection_error, ssl_weights, SoftmaxSign, SslScore};
use posefuse::graph::gcn_adjacency;
use posefuse::io::{read_json, to_canonical_json, write_atomic, write_canonical_json, write_json};
use posefuse::manifest::{collect_manifests, write_scene, LoadedManifest};
use posefuse::matching::{match_from_sim, match_pose_sets, sim_matrix, MatchParams, MatchResult, ScaleMode};
use posefuse::metrics::{evaluate_frame, MetricAccumulator, MetricParams, Pairing};
use posefuse::pipeline::{run_pipeline, FuseStrategy, PipelineConfig};
use posefuse::synth::{generate_scene, perturb_scene, split_seed, NoiseParams, SynthParams};
use posefuse::tensor::read_tensor;
use posefuse::{CameraIntrinsics, Error, Pose2D, Pose3D, PoseSet, Skeleton};

use crate::{
    AdjacencyArgs, Command, DecodeArgs, DecodeOpts, EvalArgs, EvalOpts, FuseArgs, FuseOpts, MatchArgs, MatchOpts,
    PairingMode, PipelineArgs, Sign, SslArgs, Strategy, SynthArgs, EXIT_PARTIAL,
};

pub enum Failure {
    Usage(String),
    Data(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Data(e)
    }
}

type Outcome = Result<u8, Failure>;

pub fn run(command: Command) -> Outcome {
    match command {
        Command::Synth(a) => synth(a),
        Command::Decode(a) => decode(a),
        Command::Match(a) => matching(a),
        Command::Fuse(a) => fuse(a),
        Command::Eval(a) => eval(a),
        Command::SslScore(a) => ssl_score(a),
        Command::Adjacency(a) => adjacency(a),
        Command::Pipeline(a) => pipeline(a),
    }
}

fn skeleton_or_default(path: &Option<impl AsRef<Path>>) -> Result<Skeleton, Error> {
    match path {
        Some(p) => Skeleton::load(p),
        None => Ok(Skeleton::default_body()),
    }
}

fn read_poses(path: &Path) -> Result<Vec<Pose3D>, Error> {
    Ok(read_json::<PoseSet<Pose3D>>(path)?.poses)
}

fn decode_params(o: &DecodeOpts) -> DecodeParams {
    DecodeParams {
        min_score: o.min_score,
        max_people: o.max_people,
        tag_gap: o.tag_gap,
    }
}

fn match_params(o: &MatchOpts) -> MatchParams {
    MatchParams {
        scale: o.scale_mm.map_or(ScaleMode::PerPair, ScaleMode::Global),
        sigmas: o.sigmas.clone(),
        threshold: o.match_threshold,
    }
}

fn fusion(o: &FuseOpts, root: usize) -> Result<Fusion, Failure> {
    Ok(match o.strategy {
        Strategy::Hard => Fusion::Hard { root },
        Strategy::Linear => Fusion::Linear,
        Strategy::Mlp => {
            let path = o
                .weights
                .as_ref()
                .ok_or_else(|| Failure::Usage("--strategy mlp needs --weights".into()))?;
            Fusion::Mlp(Box::new(MlpFuser {
                weights: MlpWeights::load(path)?,
                root,
                with_similarity: o.mlp_similarity,
            }))
        }
    })
}

fn metric_params(o: &EvalOpts, root: usize, camera: Option<CameraIntrinsics>) -> Result<MetricParams, Failure> {
    let pairing = match o.pairing {
        PairingMode::Root3d => Pairing::Root3d { gate_mm: o.gate_mm },
        PairingMode::Oks2d => Pairing::Oks2d {
            camera: camera.ok_or_else(|| Failure::Usage("--pairing oks2d needs --camera".into()))?,
            min_oks: o.min_oks,
        },
    };
    Ok(MetricParams {
        root,
        pairing,
        pck_threshold_mm: o.pck_threshold_mm,
        ap_threshold_mm: o.ap_threshold_mm,
        f1_thresholds_m: o.f1_thresholds_m.clone(),
    })
}

fn synth(a: SynthArgs) -> Outcome {
    if a.persons == 0 || a.persons_max.is_some_and(|m| m < a.persons) {
        return Err(Failure::Usage("need 1 <= --persons <= --persons-max".into()));
    }
    let camera = match &a.camera {
        Some(p) => read_json(p)?,
        None => CameraIntrinsics::new(a.focal, a.focal, a.width as f64 / 2.0, a.height as f64 / 2.0, a.width, a.height)?,
    };
    let skeleton = skeleton_or_default(&a.skeleton)?;
    let params = SynthParams {
        sigma_px: a.sigma_px,
        min_separation_mm: a.min_separation_mm,
        min_pixel_separation: a.min_pixel_separation,
        depth_range_mm: (a.depth_min_mm, a.depth_max_mm),
        ..SynthParams::default()
    };
    let noise = NoiseParams {
        td_sigma_mm: a.td_noise_mm,
        mask_prob: a.mask_prob,
        ..NoiseParams::default()
    };
    std::fs::create_dir_all(&a.out).map_err(|e| Error::from(e).at(&a.out))?;
    let skeleton_file = "skeleton.json";
    write_json(a.out.join(skeleton_file), &skeleton)?;
    for frame in 0..a.frames {
        let scene_seed = split_seed(a.seed, 2 * frame);
        let n = match a.persons_max {
            Some(max) => a.persons + (split_seed(scene_seed, 0) % (max - a.persons + 1) as u64) as usize,
            None => a.persons,
        };
        let scene = generate_scene(scene_seed, n, &camera, &skeleton, &params)?;
        let (td, _) = perturb_scene(&scene.persons, &noise, split_seed(a.seed, 2 * frame + 1))?;
        write_scene(&a.out, &a.sequence_id, frame, &scene, &td, skeleton_file)?;
    }
    Ok(0)
}

fn decode(a: DecodeArgs) -> Outcome {
    let m = LoadedManifest::load(&a.manifest)?;
    let skeleton = m.skeleton()?;
    let maps = m.maps(&skeleton)?;
    let poses = decode_bottom_up(&maps, &m.manifest.camera, &skeleton, &decode_params(&a.decode))?;
    write_json(&a.out, &PoseSet::new(poses))?;
    Ok(0)
}

fn matching(a: MatchArgs) -> Outcome {
    let (bu, td) = (read_poses(&a.bu)?, read_poses(&a.td)?);
    let m = match_pose_sets(&bu, &td, &match_params(&a.matching))?;
    write_json(&a.out, &m)?;
    Ok(0)
}

fn fuse(a: FuseArgs) -> Outcome {
    let (bu, td) = (read_poses(&a.bu)?, read_poses(&a.td)?);
    let root = skeleton_or_default(&a.skeleton)?.root_index();
    let m: MatchResult = match &a.matches {
        Some(p) => read_json(p)?,
        None => {
            let params = match_params(&a.matching);
            let k = bu.first().or(td.first()).map_or(0, Pose3D::joint_count);
            let sim: SimMatrix = sim_matrix(&bu, &td, &params)?;
            match_from_sim(&sim, params.threshold_for(k))?
        }
    };
    let check = |i: usize, n: usize| if i < n { Ok(()) } else { Err(Error::IndexOutOfRange { index: i, count: n }) };
    for p in &m.pairs {
        check(p.bu_index, bu.len())?;
        check(p.td_index, td.len())?;
    }
    for &i in &m.unmatched_bu {
        check(i, bu.len())?;
    }
    for &i in &m.unmatched_td {
        check(i, td.len())?;
    }
    let pairs = pairs_from_match(&bu, &td, &m)?;
    let fused = fusion(&a.fuse, root)?.apply_all(&pairs)?;
    write_json(&a.out, &PoseSet::new(fused))?;
    Ok(0)
}

const METRIC_KEYS: [&str; 7] = ["mpjpe", "pa_mpjpe", "pck", "pck_abs", "auc_rel", "ap_root", "f1_at"];

fn eval(a: EvalArgs) -> Outcome {
    let selected: Vec<&str> = if a.metrics == "all" {
        METRIC_KEYS.to_vec()
    } else {
        a.metrics.split(',').map(str::trim).collect()
    };
    if let Some(bad) = selected.iter().find(|m| !METRIC_KEYS.contains(m)) {
        return Err(Failure::Usage(format!("unknown metric {bad:?}; expected all or {}", METRIC_KEYS.join(","))));
    }
    let (pred, gt) = (read_poses(&a.pred)?, read_poses(&a.gt)?);
    let root = skeleton_or_default(&a.skeleton)?.root_index();
    let camera = a.camera.as_ref().map(read_json).transpose()?;
    let params = metric_params(&a.eval, root, camera)?;
    let mut acc = MetricAccumulator::new(params.clone());
    acc.add(None, &evaluate_frame(&pred, &gt, &params)?);
    let report = acc.finish()?;
    let mut value = serde_json::to_value(&report).map_err(Error::from)?;
    if let Some(obj) = value.as_object_mut() {
        obj.retain(|k, _| !METRIC_KEYS.contains(&k.as_str()) || selected.contains(&k.as_str()));
    }
    write_atomic(&a.report, to_canonical_json(&value)?.as_bytes())?;
    Ok(0)
}

/// Uniform angle in `[-pi, pi)` from a seed.
fn angle_from_seed(seed: u64) -> f64 {
    let unit = (split_seed(seed, 0) >> 11) as f64 / (1u64 << 53) as f64;
    (2.0 * unit - 1.0) * std::f64::consts::PI
}

fn ssl_score(a: SslArgs) -> Outcome {
    let poses = read_poses(&a.poses)?;
    let poses2d = read_json::<PoseSet<Pose2D>>(&a.poses2d)?.poses;
    let camera: CameraIntrinsics = read_json(&a.camera)?;
    let root = skeleton_or_default(&a.skeleton)?.root_index();
    if poses.len() != poses2d.len() {
        return Err(Error::DimMismatch(format!("{} 3D poses but {} 2D poses", poses.len(), poses2d.len())).into());
    }
    let repredicted = a.repredicted.as_deref().map(read_poses).transpose()?;
    if let Some(r) = &repredicted {
        if r.len() != poses.len() {
            return Err(Error::DimMismatch(format!("{} re-predictions for {} poses", r.len(), poses.len())).into());
        }
    }
    let theta = a.theta.unwrap_or_else(|| angle_from_seed(a.seed));
    let mut e_rep = Vec::with_capacity(poses.len());
    let mut e_mp = Vec::with_capacity(poses.len());
    for (i, (p3, p2)) in poses.iter().zip(&poses2d).enumerate() {
        e_rep.push(reprojection_error(p3, p2, &camera)?);
        e_mp.push(match &repredicted {
            Some(r) => multi_perspective_error(p3, theta, root, &camera, |_| r[i].clone())?,
            None => 0.0,
        });
    }
    let sign = match a.sign {
        Sign::Curriculum => SoftmaxSign::Curriculum,
        Sign::Literal => SoftmaxSign::Literal,
    };
    let w = ssl_weights(&e_rep, &e_mp, a.epoch, sign)?;
    let scores: Vec<SslScore> = (0..poses.len())
        .map(|i| SslScore::new(e_rep[i], e_mp[i], w[i], a.l_dis))
        .collect();
    write_canonical_json(&a.out, &serde_json::json!({ "theta": theta, "scores": scores }))?;
    Ok(0)
}

fn adjacency(a: AdjacencyArgs) -> Outcome {
    let heatmaps = read_tensor(&a.heatmaps)?;
    let skeleton = skeleton_or_default(&a.skeleton)?;
    write_json(&a.out, &gcn_adjacency(&heatmaps, &skeleton)?)?;
    Ok(0)
}

fn pipeline(a: PipelineArgs) -> Outcome {
    let manifests = collect_manifests(&a.manifests)?;
    if manifests.is_empty() {
        return Err(Failure::Usage("no manifests found".into()));
    }
    let (strategy, mlp) = match a.fuse.strategy {
        Strategy::Hard => (FuseStrategy::Hard, None),
        Strategy::Linear => (FuseStrategy::Linear, None),
        Strategy::Mlp => {
            let path = a
                .fuse
                .weights
                .as_ref()
                .ok_or_else(|| Failure::Usage("--strategy mlp needs --weights".into()))?;
            (FuseStrategy::Mlp, Some(MlpWeights::load(path)?))
        }
    };
    if a.eval.pairing == PairingMode::Oks2d {
        return Err(Failure::Usage("pipeline evaluation supports --pairing root3d only".into()));
    }
    let cfg = PipelineConfig {
        decode: decode_params(&a.decode),
        matching: match_params(&a.matching),
        strategy,
        mlp,
        mlp_similarity: a.fuse.mlp_similarity,
        metrics: metric_params(&a.eval, 0, None)?,
        out_dir: Some(a.out.clone()),
        keep_going: a.keep_going,
        threads: a.threads,
    };
    let outcome = run_pipeline(&manifests, &cfg)?;
    for f in &outcome.failures {
        eprintln!("error: {f}");
    }
    eprintln!("{} of {} frames processed", outcome.frames_ok, manifests.len());
    Ok(if outcome.is_partial() { EXIT_PARTIAL } else { 0 })
}
