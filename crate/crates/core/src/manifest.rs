//! Per-frame scene manifests. Relative paths resolve against the directory
//! holding the manifest.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::decode::BottomUpMaps;
use crate::error::{Error, Result};
use crate::io::{read_json, write_json};
use crate::skeleton::Skeleton;
use crate::synth::SyntheticScene;
use crate::tensor::{read_tensor, write_tensor};
use crate::types::{CameraIntrinsics, DetectionSet, Pose3D, PoseSet};

pub const MANIFEST_SUFFIX: &str = ".manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneManifest {
    pub sequence_id: String,
    pub frame_index: u64,
    pub camera: CameraIntrinsics,
    pub skeleton: PathBuf,
    pub heatmaps: PathBuf,
    pub tags: PathBuf,
    pub root_depth: PathBuf,
    pub rel_depth: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detections: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth: Option<PathBuf>,
    /// Top-down camera-centric pose set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub topdown: Option<PathBuf>,
}

/// A manifest together with the directory its paths are relative to.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedManifest {
    pub path: PathBuf,
    pub manifest: SceneManifest,
}

impl LoadedManifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let manifest = read_json(&path)?;
        Ok(LoadedManifest { path, manifest })
    }

    pub fn frame_id(&self) -> String {
        frame_stem(&self.manifest.sequence_id, self.manifest.frame_index)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        self.path.parent().unwrap_or(Path::new(".")).join(p)
    }

    pub fn skeleton(&self) -> Result<Skeleton> {
        Skeleton::load(self.resolve(&self.manifest.skeleton))
    }

    /// Loads the four maps and checks them against the camera and skeleton.
    pub fn maps(&self, skeleton: &Skeleton) -> Result<BottomUpMaps> {
        let m = &self.manifest;
        let maps = BottomUpMaps::new(
            read_tensor(self.resolve(&m.heatmaps))?,
            read_tensor(self.resolve(&m.tags))?,
            read_tensor(self.resolve(&m.root_depth))?,
            read_tensor(self.resolve(&m.rel_depth))?,
        )
        .map_err(|e| e.at(&self.path))?;
        if maps.joint_count() != skeleton.joint_count() {
            return Err(Error::JointCountMismatch {
                left: maps.joint_count(),
                right: skeleton.joint_count(),
            }
            .at(&self.path));
        }
        if maps.size() != (m.camera.height, m.camera.width) {
            return Err(Error::DimMismatch(format!(
                "maps are {:?} (h, w) but the camera is {}x{}",
                maps.size(),
                m.camera.width,
                m.camera.height
            ))
            .at(&self.path));
        }
        Ok(maps)
    }

    fn poses(&self, p: &Option<PathBuf>, k: usize) -> Result<Option<Vec<Pose3D>>> {
        let Some(p) = p else { return Ok(None) };
        let path = self.resolve(p);
        let set: PoseSet<Pose3D> = read_json(&path)?;
        if let Some(bad) = set.poses.iter().find(|q| q.joint_count() != k) {
            return Err(Error::JointCountMismatch {
                left: bad.joint_count(),
                right: k,
            }
            .at(path));
        }
        Ok(Some(set.poses))
    }

    pub fn ground_truth(&self, k: usize) -> Result<Option<Vec<Pose3D>>> {
        self.poses(&self.manifest.ground_truth, k)
    }

    pub fn topdown(&self, k: usize) -> Result<Option<Vec<Pose3D>>> {
        self.poses(&self.manifest.topdown, k)
    }

    pub fn detections(&self) -> Result<Option<DetectionSet>> {
        self.manifest
            .detections
            .as_ref()
            .map(|p| read_json(self.resolve(p)))
            .transpose()
    }
}

pub fn frame_stem(sequence_id: &str, frame_index: u64) -> String {
    format!("{sequence_id}_{frame_index:06}")
}

/// Manifest paths in `paths`, with directories expanded to their
/// `*.manifest.json` entries in name order.
pub fn collect_manifests(paths: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut found: Vec<PathBuf> = std::fs::read_dir(p)
                .map_err(|e| Error::from(e).at(p))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|e| e.to_str().is_some_and(|s| s.ends_with(MANIFEST_SUFFIX)))
                .collect();
            found.sort();
            out.extend(found);
        } else {
            out.push(p.clone());
        }
    }
    Ok(out)
}

/// Writes a synthetic frame (maps, detections, ground truth, top-down set and
/// manifest) into `dir`. The skeleton file is referenced by name and must be
/// written separately. Returns the manifest path.
pub fn write_scene(
    dir: &Path,
    sequence_id: &str,
    frame_index: u64,
    scene: &SyntheticScene,
    topdown: &[Pose3D],
    skeleton_file: &str,
) -> Result<PathBuf> {
    let stem = frame_stem(sequence_id, frame_index);
    let [hm, tag, rootd, reld] = BottomUpMaps::file_names(&stem);
    write_tensor(dir.join(&hm), &scene.maps.heatmaps)?;
    write_tensor(dir.join(&tag), &scene.maps.tags)?;
    write_tensor(dir.join(&rootd), &scene.maps.root_depth)?;
    write_tensor(dir.join(&reld), &scene.maps.rel_depth)?;
    let det = format!("{stem}.det.json");
    let gt = format!("{stem}.gt.json");
    let td = format!("{stem}.td.json");
    write_json(
        dir.join(&det),
        &DetectionSet {
            detections: scene.detections.clone(),
        },
    )?;
    write_json(dir.join(&gt), &PoseSet::new(scene.persons.clone()))?;
    write_json(dir.join(&td), &PoseSet::new(topdown.to_vec()))?;
    let manifest = SceneManifest {
        sequence_id: sequence_id.to_owned(),
        frame_index,
        camera: scene.camera,
        skeleton: skeleton_file.into(),
        heatmaps: hm.into(),
        tags: tag.into(),
        root_depth: rootd.into(),
        rel_depth: reld.into(),
        detections: Some(det.into()),
        ground_truth: Some(gt.into()),
        topdown: Some(td.into()),
    };
    let path = dir.join(format!("{stem}{MANIFEST_SUFFIX}"));
    write_json(&path, &manifest)?;
    Ok(path)
}
