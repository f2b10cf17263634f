//! Pinhole camera math and the semi-supervised consistency scores.
//!
//! Camera frame: x right, y down (vertical, perpendicular to the ground
//! plane), z forward. All 3D quantities are millimetres, 2D are pixels.

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{CameraIntrinsics, Pose2D, Pose3D};

pub fn project_point(p: &Vector3<f64>, cam: &CameraIntrinsics) -> Vector2<f64> {
    Vector2::new(cam.fx * p.x / p.z + cam.cx, cam.fy * p.y / p.z + cam.cy)
}

pub fn backproject_point(px: &Vector2<f64>, z: f64, cam: &CameraIntrinsics) -> Vector3<f64> {
    Vector3::new((px.x - cam.cx) * z / cam.fx, (px.y - cam.cy) * z / cam.fy, z)
}

/// Projects every joint to pixels. Visible joints must lie in front of the
/// camera; invisible joints behind it are left at the origin.
pub fn project(pose: &Pose3D, cam: &CameraIntrinsics) -> Result<Pose2D> {
    let k = pose.joint_count();
    let mut out = Pose2D::empty(k);
    for j in 0..k {
        let p = &pose.joints[j];
        if pose.is_visible(j) {
            if !(p.z > 0.0) {
                return Err(Error::NonPositiveDepth { joint: j, depth: p.z });
            }
            out.set_joint(j, project_point(p, cam), pose.confidence[j]);
        } else if p.z > 0.0 {
            out.joints[j] = project_point(p, cam);
        }
    }
    Ok(out)
}

/// Lifts pixels to camera space at the given per-joint depths.
pub fn backproject(pose: &Pose2D, depths: &[f64], cam: &CameraIntrinsics) -> Result<Pose3D> {
    if depths.len() != pose.joint_count() {
        return Err(Error::JointCountMismatch {
            left: pose.joint_count(),
            right: depths.len(),
        });
    }
    if let Some((j, &z)) = depths.iter().enumerate().find(|(_, z)| !(**z > 0.0)) {
        return Err(Error::NonPositiveDepth { joint: j, depth: z });
    }
    let joints = pose
        .joints
        .iter()
        .zip(depths)
        .map(|(px, &z)| backproject_point(px, z, cam))
        .collect();
    Pose3D::new(joints, pose.confidence.clone())
}

/// Root depth divided by the horizontal focal length.
pub fn normalized_root_depth(z: f64, cam: &CameraIntrinsics) -> Result<f64> {
    if !(z > 0.0) {
        return Err(Error::Domain { what: "root depth", value: z });
    }
    Ok(z / cam.fx)
}

pub fn denormalize_root_depth(r: f64, cam: &CameraIntrinsics) -> f64 {
    r * cam.fx
}

fn rotate_offset(v: &Vector3<f64>, cos: f64, sin: f64) -> Vector3<f64> {
    Vector3::new(v.x * cos + v.z * sin, v.y, -v.x * sin + v.z * cos)
}

/// Rotates every joint by `theta` radians about the vertical axis through `center`.
pub fn rotate_about_point(pose: &Pose3D, theta: f64, center: &Vector3<f64>) -> Pose3D {
    let (sin, cos) = theta.sin_cos();
    Pose3D {
        joints: pose
            .joints
            .iter()
            .map(|j| center + rotate_offset(&(j - center), cos, sin))
            .collect(),
        confidence: pose.confidence.clone(),
        person_id: pose.person_id,
    }
}

/// Rotates the pose about the vertical axis through its root joint. The root
/// keeps its exact position.
pub fn rotate_about_vertical(pose: &Pose3D, theta: f64, root: usize) -> Pose3D {
    let center = pose.joints[root];
    let mut out = rotate_about_point(pose, theta, &center);
    out.joints[root] = center;
    out
}

/// Confidence-weighted mean squared pixel distance between the projected 3D
/// pose and a 2D pose. Weights come from the 2D pose; zero-weight joints are
/// skipped entirely, so their 3D coordinates may be arbitrary.
pub fn reprojection_error(pose3d: &Pose3D, pose2d: &Pose2D, cam: &CameraIntrinsics) -> Result<f64> {
    let k = pose3d.joint_count();
    if pose2d.joint_count() != k {
        return Err(Error::JointCountMismatch {
            left: k,
            right: pose2d.joint_count(),
        });
    }
    if k == 0 {
        return Ok(0.0);
    }
    let mut sum = 0.0;
    for j in 0..k {
        let c = pose2d.confidence[j];
        if c == 0.0 {
            continue;
        }
        let p = &pose3d.joints[j];
        if !(p.z > 0.0) {
            return Err(Error::NonPositiveDepth { joint: j, depth: p.z });
        }
        sum += c * (project_point(p, cam) - pose2d.joints[j]).norm_squared();
    }
    Ok(sum / k as f64)
}

/// Mean squared 3D deviation between a pose and its re-prediction from a
/// rotated viewpoint.
///
/// The pose is rotated by `theta` about the vertical axis through its root,
/// projected, and handed to `repredict`. The result is compared with the
/// rotated pose; since the rotation is an isometry about a fixed axis this is
/// the same as mapping the re-prediction back to the original view.
pub fn multi_perspective_error<F>(
    pose: &Pose3D,
    theta: f64,
    root: usize,
    cam: &CameraIntrinsics,
    repredict: F,
) -> Result<f64>
where
    F: Fn(&Pose2D) -> Pose3D,
{
    let k = pose.joint_count();
    let rotated = rotate_about_vertical(pose, theta, root);
    let reprojected = project(&rotated, cam)?;
    let predicted = repredict(&reprojected);
    if predicted.joint_count() != k {
        return Err(Error::JointCountMismatch {
            left: k,
            right: predicted.joint_count(),
        });
    }
    if k == 0 {
        return Ok(0.0);
    }
    let sum: f64 = predicted
        .joints
        .iter()
        .zip(&rotated.joints)
        .map(|(a, b)| (a - b).norm_squared())
        .sum();
    Ok(sum / k as f64)
}

/// Sign applied to errors inside the curriculum softmax.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SoftmaxSign {
    /// `softmax(-E / r)`: low-error samples weigh more early on.
    #[default]
    Curriculum,
    /// `softmax(E / r)`, the formula exactly as printed.
    Literal,
}

fn softmax(values: impl Iterator<Item = f64>) -> Vec<f64> {
    let v: Vec<f64> = values.collect();
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = v.iter().map(|x| (x - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Per-sample curriculum weights over a batch: the sum of two softmaxes taken
/// across the batch, one over reprojection errors and one over
/// multi-perspective errors, each divided by the epoch count `epoch`.
pub fn ssl_weights(e_rep: &[f64], e_mp: &[f64], epoch: f64, sign: SoftmaxSign) -> Result<Vec<f64>> {
    if e_rep.is_empty() {
        return Err(Error::EmptyBatch);
    }
    if e_rep.len() != e_mp.len() {
        return Err(Error::DimMismatch(format!(
            "{} reprojection errors vs {} multi-perspective errors",
            e_rep.len(),
            e_mp.len()
        )));
    }
    if !(epoch >= 1.0) {
        return Err(Error::Domain { what: "epoch", value: epoch });
    }
    let s = match sign {
        SoftmaxSign::Curriculum => -1.0,
        SoftmaxSign::Literal => 1.0,
    };
    let a = softmax(e_rep.iter().map(|e| s * e / epoch));
    let b = softmax(e_mp.iter().map(|e| s * e / epoch));
    Ok(a.into_iter().zip(b).map(|(x, y)| x + y).collect())
}

pub fn ssl_loss(w: f64, e_rep: f64, e_mp: f64, l_dis: f64) -> f64 {
    w * (e_rep + e_mp) + l_dis
}

/// Consistency scores for one pseudo-labelled sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SslScore {
    pub e_rep: f64,
    pub e_mp: f64,
    pub weight_w: f64,
    pub l_ssl: f64,
}

impl SslScore {
    pub fn new(e_rep: f64, e_mp: f64, weight_w: f64, l_dis: f64) -> Self {
        SslScore {
            e_rep,
            e_mp,
            weight_w,
            l_ssl: ssl_loss(weight_w, e_rep, e_mp, l_dis),
        }
    }
}
