use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Pinhole intrinsics, all in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawCamera")]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

#[derive(Deserialize)]
struct RawCamera {
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    width: usize,
    height: usize,
}

impl TryFrom<RawCamera> for CameraIntrinsics {
    type Error = Error;
    fn try_from(r: RawCamera) -> Result<Self> {
        CameraIntrinsics::new(r.fx, r.fy, r.cx, r.cy, r.width, r.height)
    }
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: usize, height: usize) -> Result<Self> {
        if !(fx > 0.0 && fy > 0.0 && fx.is_finite() && fy.is_finite()) {
            return Err(Error::InvalidCamera(format!("focal lengths must be positive, got {fx}, {fy}")));
        }
        if !(cx >= 0.0 && cx < width as f64 && cy >= 0.0 && cy < height as f64) {
            return Err(Error::InvalidCamera(format!(
                "principal point ({cx}, {cy}) outside {width}x{height}"
            )));
        }
        Ok(CameraIntrinsics { fx, fy, cx, cy, width, height })
    }

    /// 1920x1080 with a 1000 px focal length and a centred principal point.
    pub fn full_hd() -> Self {
        CameraIntrinsics::new(1000.0, 1000.0, 960.0, 540.0, 1920, 1080).unwrap()
    }
}

/// One person's 2D skeleton in pixels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPose2D")]
pub struct Pose2D {
    pub joints: Vec<Vector2<f64>>,
    pub confidence: Vec<f64>,
    pub visible: Vec<bool>,
}

#[derive(Deserialize)]
struct RawPose2D {
    joints: Vec<Vector2<f64>>,
    confidence: Vec<f64>,
    visible: Vec<bool>,
}

impl TryFrom<RawPose2D> for Pose2D {
    type Error = Error;
    fn try_from(r: RawPose2D) -> Result<Self> {
        Pose2D::new(r.joints, r.confidence, r.visible)
    }
}

impl Pose2D {
    pub fn new(joints: Vec<Vector2<f64>>, confidence: Vec<f64>, visible: Vec<bool>) -> Result<Self> {
        let k = joints.len();
        if confidence.len() != k || visible.len() != k {
            return Err(Error::InvalidPose(format!(
                "{k} joints but {} confidences and {} visibility flags",
                confidence.len(),
                visible.len()
            )));
        }
        for j in 0..k {
            let c = confidence[j];
            if !(0.0..=1.0).contains(&c) {
                return Err(Error::InvalidPose(format!("confidence {c} of joint {j} outside [0, 1]")));
            }
            if !visible[j] && c != 0.0 {
                return Err(Error::InvalidPose(format!("invisible joint {j} has confidence {c}")));
            }
        }
        Ok(Pose2D { joints, confidence, visible })
    }

    /// All joints invisible, at the origin.
    pub fn empty(k: usize) -> Self {
        Pose2D {
            joints: vec![Vector2::zeros(); k],
            confidence: vec![0.0; k],
            visible: vec![false; k],
        }
    }

    pub fn joint_count(&self) -> usize {
        self.joints.len()
    }

    pub fn set_joint(&mut self, k: usize, at: Vector2<f64>, confidence: f64) {
        self.joints[k] = at;
        self.confidence[k] = confidence;
        self.visible[k] = true;
    }
}

/// One person's camera-centric skeleton in millimetres.
///
/// A joint counts as visible when its confidence is positive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPose3D")]
pub struct Pose3D {
    pub joints: Vec<Vector3<f64>>,
    pub confidence: Vec<f64>,
    #[serde(default)]
    pub person_id: Option<u32>,
}

#[derive(Deserialize)]
struct RawPose3D {
    joints: Vec<Vector3<f64>>,
    confidence: Vec<f64>,
    #[serde(default)]
    person_id: Option<u32>,
}

impl TryFrom<RawPose3D> for Pose3D {
    type Error = Error;
    fn try_from(r: RawPose3D) -> Result<Self> {
        let mut p = Pose3D::new(r.joints, r.confidence)?;
        p.person_id = r.person_id;
        Ok(p)
    }
}

impl Pose3D {
    pub fn new(joints: Vec<Vector3<f64>>, confidence: Vec<f64>) -> Result<Self> {
        if joints.len() != confidence.len() {
            return Err(Error::InvalidPose(format!(
                "{} joints but {} confidences",
                joints.len(),
                confidence.len()
            )));
        }
        if let Some((j, c)) = confidence.iter().enumerate().find(|(_, c)| !(0.0..=1.0).contains(*c)) {
            return Err(Error::InvalidPose(format!("confidence {c} of joint {j} outside [0, 1]")));
        }
        Ok(Pose3D {
            joints,
            confidence,
            person_id: None,
        })
    }

    /// Every joint at the origin with zero confidence.
    pub fn zeros(k: usize) -> Self {
        Pose3D {
            joints: vec![Vector3::zeros(); k],
            confidence: vec![0.0; k],
            person_id: None,
        }
    }

    pub fn with_person_id(mut self, id: u32) -> Self {
        self.person_id = Some(id);
        self
    }

    pub fn joint_count(&self) -> usize {
        self.joints.len()
    }

    pub fn is_visible(&self, k: usize) -> bool {
        self.confidence[k] > 0.0
    }

    /// Joints relative to the given root joint.
    pub fn root_relative(&self, root: usize) -> Vec<Vector3<f64>> {
        let r = self.joints[root];
        self.joints.iter().map(|j| j - r).collect()
    }

    pub fn translated(&self, by: &Vector3<f64>) -> Pose3D {
        Pose3D {
            joints: self.joints.iter().map(|j| j + by).collect(),
            confidence: self.confidence.clone(),
            person_id: self.person_id,
        }
    }
}

/// Axis-aligned person box in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    /// `[x_min, y_min, x_max, y_max]`
    pub bbox: [f64; 4],
    pub score: f64,
}

impl Detection {
    pub fn new(bbox: [f64; 4], score: f64) -> Result<Self> {
        let [x0, y0, x1, y1] = bbox;
        if !(x0 < x1 && y0 < y1) {
            return Err(Error::InvalidArgument(format!("degenerate box {bbox:?}")));
        }
        if !(0.0..=1.0).contains(&score) {
            return Err(Error::InvalidArgument(format!("detection score {score} outside [0, 1]")));
        }
        Ok(Detection { bbox, score })
    }

    pub fn center(&self) -> (f64, f64) {
        let [x0, y0, x1, y1] = self.bbox;
        ((x0 + x1) / 2.0, (y0 + y1) / 2.0)
    }
}

/// A list of poses as stored in pose-set JSON files: `{"poses": [...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseSet<P> {
    pub poses: Vec<P>,
}

impl<P> PoseSet<P> {
    pub fn new(poses: Vec<P>) -> Self {
        PoseSet { poses }
    }
}

impl<P> Default for PoseSet<P> {
    fn default() -> Self {
        PoseSet { poses: Vec::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct DetectionSet {
    pub detections: Vec<Detection>,
}
