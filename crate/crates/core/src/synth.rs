//! Synthetic multi-person scenes with known ground truth.
//!
//! Persons are random articulations of the skeleton's bone specs placed in
//! front of the camera. Their bottom-up maps are rendered so that decoding
//! recovers them: Gaussian heatmaps peaking at the rounded projected joint
//! pixel, constant tags per person, and exact depths at joint pixels.

use nalgebra::{Rotation3, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::decode::BottomUpMaps;
use crate::error::{Error, Result};
use crate::geometry::project_point;
use crate::skeleton::Skeleton;
use crate::tensor::Tensor;
use crate::types::{CameraIntrinsics, Detection, Pose3D};

pub const MAX_PLACEMENT_ATTEMPTS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthParams {
    /// Gaussian width of rendered heatmap blobs, pixels.
    pub sigma_px: f64,
    /// Minimum 3D distance between person roots, mm.
    pub min_separation_mm: f64,
    /// Minimum pixel distance between same-type joints of different persons.
    pub min_pixel_separation: f64,
    pub depth_range_mm: (f64, f64),
    /// Per-limb yaw and pitch are drawn from `[-limb_angle, limb_angle]`.
    pub limb_angle_rad: f64,
    /// Minimum distance of every projected joint from the image border, px.
    pub border_px: f64,
    /// Detection boxes grow by this fraction of their size on each side.
    pub box_padding: f64,
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            sigma_px: 2.0,
            min_separation_mm: 600.0,
            min_pixel_separation: 16.0,
            depth_range_mm: (2000.0, 12000.0),
            limb_angle_rad: std::f64::consts::FRAC_PI_4,
            border_px: 12.0,
            box_padding: 0.1,
        }
    }
}

impl SynthParams {
    fn validate(&self) -> Result<()> {
        let (lo, hi) = self.depth_range_mm;
        if !(lo > 0.0 && hi >= lo) {
            return Err(Error::InvalidArgument(format!("depth range [{lo}, {hi}]")));
        }
        for (what, v) in [
            ("sigma_px", self.sigma_px),
            ("min_separation_mm", self.min_separation_mm),
            ("min_pixel_separation", self.min_pixel_separation),
            ("border_px", self.border_px),
            ("box_padding", self.box_padding),
            ("limb_angle_rad", self.limb_angle_rad),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!("{what} = {v}")));
            }
        }
        if !(self.sigma_px > 0.0) {
            return Err(Error::InvalidArgument("sigma_px must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticScene {
    pub seed: u64,
    pub camera: CameraIntrinsics,
    /// Ground truth; person `i` carries `person_id = i`.
    pub persons: Vec<Pose3D>,
    pub maps: BottomUpMaps,
    pub detections: Vec<Detection>,
}

impl SyntheticScene {
    /// Projected joints of every person, in pixels.
    pub fn projections(&self) -> Vec<Vec<Vector2<f64>>> {
        self.persons
            .iter()
            .map(|p| p.joints.iter().map(|j| project_point(j, &self.camera)).collect())
            .collect()
    }
}

/// Independent seed for item `index` of a run seeded with `seed`
/// (SplitMix64 finalizer).
pub fn split_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Tag value of person `i` out of `n`.
pub fn person_tag(i: usize, n: usize) -> f64 {
    (i as f64 + 0.5) / n as f64
}

/// Root-centred articulation: each bone's rest direction is turned by a
/// random yaw and pitch, then the whole body by a random heading.
fn sample_body(skeleton: &Skeleton, params: &SynthParams, rng: &mut ChaCha8Rng) -> Result<Vec<Vector3<f64>>> {
    let k = skeleton.joint_count();
    let root = skeleton.root_index();
    let heading = Rotation3::from_axis_angle(&Vector3::y_axis(), rng.random_range(-std::f64::consts::PI..std::f64::consts::PI));
    let a = params.limb_angle_rad;
    let mut joints = vec![Vector3::zeros(); k];
    for j in skeleton.topological_order() {
        if j == root {
            continue;
        }
        let bone = skeleton
            .bone(j)
            .ok_or_else(|| Error::InvalidSkeleton(format!("joint {j} has no bone spec")))?;
        let dir = Vector3::from(bone.direction);
        let norm = dir.norm();
        if !(norm > 0.0) {
            return Err(Error::InvalidSkeleton(format!("joint {j} has a zero bone direction")));
        }
        let len = if bone.max_mm > bone.min_mm {
            rng.random_range(bone.min_mm..=bone.max_mm)
        } else {
            bone.min_mm
        };
        let (yaw, pitch) = if a > 0.0 {
            (rng.random_range(-a..=a), rng.random_range(-a..=a))
        } else {
            (0.0, 0.0)
        };
        let turn = Rotation3::from_axis_angle(&Vector3::y_axis(), yaw) * Rotation3::from_axis_angle(&Vector3::x_axis(), pitch);
        joints[j] = joints[skeleton.parent(j)] + heading * (turn * dir) * (len / norm);
    }
    Ok(joints)
}

fn inside(p: &Vector2<f64>, cam: &CameraIntrinsics, border: f64) -> bool {
    p.x >= border && p.y >= border && p.x <= cam.width as f64 - 1.0 - border && p.y <= cam.height as f64 - 1.0 - border
}

/// Pixel coordinates within this distance of a half-integer are avoided so
/// that rounding and the discrete argmax agree.
const HALF_PIXEL_MARGIN: f64 = 1e-3;

fn near_half(v: f64) -> bool {
    ((v - v.floor()) - 0.5).abs() < HALF_PIXEL_MARGIN
}

/// Random scene of `n_persons`, deterministic in `seed`.
pub fn generate_scene(
    seed: u64,
    n_persons: usize,
    camera: &CameraIntrinsics,
    skeleton: &Skeleton,
    params: &SynthParams,
) -> Result<SyntheticScene> {
    if n_persons == 0 {
        return Err(Error::InvalidArgument("scene needs at least one person".into()));
    }
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (z_lo, z_hi) = params.depth_range_mm;
    let mut persons: Vec<Pose3D> = Vec::with_capacity(n_persons);
    let mut pixels: Vec<Vec<Vector2<f64>>> = Vec::with_capacity(n_persons);
    let mut attempts = 0;
    while persons.len() < n_persons {
        if attempts == MAX_PLACEMENT_ATTEMPTS {
            return Err(Error::Placement {
                requested: n_persons,
                attempts,
            });
        }
        attempts += 1;
        let body = sample_body(skeleton, params, &mut rng)?;
        let z = if z_hi > z_lo { rng.random_range(z_lo..=z_hi) } else { z_lo };
        let u = rng.random_range(0.0..camera.width as f64);
        let v = rng.random_range(0.0..camera.height as f64);
        let root = Vector3::new((u - camera.cx) * z / camera.fx, (v - camera.cy) * z / camera.fy, z);
        let joints: Vec<Vector3<f64>> = body.iter().map(|b| b + root).collect();
        if joints.iter().any(|j| !(j.z > 0.0)) {
            continue;
        }
        let px: Vec<Vector2<f64>> = joints.iter().map(|j| project_point(j, camera)).collect();
        if px.iter().any(|p| !inside(p, camera, params.border_px) || near_half(p.x) || near_half(p.y)) {
            continue;
        }
        let r = skeleton.root_index();
        let crowded = persons.iter().zip(&pixels).any(|(other, opx)| {
            (other.joints[r] - root).norm() < params.min_separation_mm
                || px.iter().zip(opx).any(|(a, b)| (a - b).norm() < params.min_pixel_separation)
        });
        if crowded {
            continue;
        }
        let id = persons.len() as u32;
        persons.push(Pose3D::new(joints, vec![1.0; skeleton.joint_count()])?.with_person_id(id));
        pixels.push(px);
    }
    let maps = render_maps(&persons, &pixels, camera, skeleton.root_index(), params.sigma_px)?;
    let detections = pixels
        .iter()
        .map(|px| bounding_box(px, camera, params.box_padding))
        .collect::<Result<_>>()?;
    Ok(SyntheticScene {
        seed,
        camera: *camera,
        persons,
        maps,
        detections,
    })
}

fn bounding_box(px: &[Vector2<f64>], cam: &CameraIntrinsics, pad: f64) -> Result<Detection> {
    let (mut lo, mut hi) = (px[0], px[0]);
    for p in px {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    let margin = (hi - lo) * pad + Vector2::repeat(1.0);
    let (lo, hi) = (lo - margin, hi + margin);
    Detection::new(
        [
            lo.x.max(0.0),
            lo.y.max(0.0),
            hi.x.min(cam.width as f64 - 1.0),
            hi.y.min(cam.height as f64 - 1.0),
        ],
        1.0,
    )
}

fn rounded(p: &Vector2<f64>) -> (usize, usize) {
    (p.x.round() as usize, p.y.round() as usize)
}

/// Pixels of the square window of half-size `r` around `(cx, cy)`, clipped.
fn window(cx: usize, cy: usize, r: usize, w: usize, h: usize) -> impl Iterator<Item = (usize, usize)> {
    let (x0, x1) = (cx.saturating_sub(r), (cx + r).min(w - 1));
    let (y0, y1) = (cy.saturating_sub(r), (cy + r).min(h - 1));
    (y0..=y1).flat_map(move |y| (x0..=x1).map(move |x| (x, y)))
}

fn render_maps(
    persons: &[Pose3D],
    pixels: &[Vec<Vector2<f64>>],
    cam: &CameraIntrinsics,
    root: usize,
    sigma: f64,
) -> Result<BottomUpMaps> {
    let (w, h) = (cam.width, cam.height);
    let k = persons[0].joint_count();
    let n = persons.len();
    let mut heat = Tensor::zeros(vec![k, h, w])?;
    let mut tags = Tensor::zeros(vec![k, h, w])?;
    let mut rel = Tensor::zeros(vec![k, h, w])?;
    let mut root_depth = Tensor::zeros(vec![h, w])?;

    let blob_r = (4.0 * sigma).ceil() as usize;
    let disc_r = 3.0 * sigma;
    let disc_ri = disc_r.ceil() as usize;
    let inv = 1.0 / (2.0 * sigma * sigma);

    // far to near so nearer persons own overlapping discs
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| persons[b].joints[root].z.total_cmp(&persons[a].joints[root].z).then(a.cmp(&b)));

    for &i in &order {
        let p = &persons[i];
        let tag = person_tag(i, n) as f32;
        let z_root = p.joints[root].z;
        for (j, &c) in pixels[i].iter().enumerate() {
            let (cx, cy) = rounded(&c);
            let hm = heat.channel_mut(j);
            for (x, y) in window(cx, cy, blob_r, w, h) {
                let d2 = (x as f64 - c.x).powi(2) + (y as f64 - c.y).powi(2);
                let v = (-d2 * inv).exp() as f32;
                let cell = &mut hm[y * w + x];
                *cell = cell.max(v);
            }
            let rel_z = (p.joints[j].z - z_root) as f32;
            for (x, y) in window(cx, cy, disc_ri, w, h) {
                let d2 = (x as f64 - cx as f64).powi(2) + (y as f64 - cy as f64).powi(2);
                if d2 <= disc_r * disc_r {
                    tags.channel_mut(j)[y * w + x] = tag;
                    rel.channel_mut(j)[y * w + x] = if j == root { 0.0 } else { rel_z };
                    if j == root {
                        root_depth.data_mut()[y * w + x] = z_root as f32;
                    }
                }
            }
        }
    }
    // exact values at every joint pixel, written last
    for &i in &order {
        let p = &persons[i];
        let z_root = p.joints[root].z;
        for (j, px) in pixels[i].iter().enumerate() {
            let (x, y) = rounded(px);
            tags.channel_mut(j)[y * w + x] = person_tag(i, n) as f32;
            rel.channel_mut(j)[y * w + x] = if j == root { 0.0 } else { (p.joints[j].z - z_root) as f32 };
        }
        let (x, y) = rounded(&pixels[i][root]);
        root_depth.data_mut()[y * w + x] = z_root as f32;
    }
    BottomUpMaps::new(heat, tags, root_depth, rel)
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct NoiseParams {
    /// Isotropic per-axis Gaussian noise on top-down joints, mm.
    pub td_sigma_mm: f64,
    /// Isotropic per-axis Gaussian noise on bottom-up joints, mm.
    pub bu_sigma_mm: f64,
    /// Probability that a joint's confidence is set to zero, on both sides.
    pub mask_prob: f64,
    /// Ground-truth person indices left out of the top-down set.
    pub td_dropout: Vec<usize>,
    /// Ground-truth person indices left out of the bottom-up set.
    pub bu_dropout: Vec<usize>,
}

fn perturb(pose: &Pose3D, noise: &Normal<f64>, mask_prob: f64, rng: &mut ChaCha8Rng) -> Pose3D {
    let mut out = pose.clone();
    for (j, c) in out.joints.iter_mut().zip(out.confidence.iter_mut()) {
        let d = Vector3::new(noise.sample(rng), noise.sample(rng), noise.sample(rng));
        *j += d;
        if rng.random::<f64>() < mask_prob {
            *c = 0.0;
        }
    }
    out
}

/// Degraded copies of the ground truth: `(top_down, bottom_up)`. Dropped
/// persons are omitted; the remaining ones keep ground-truth order.
pub fn perturb_scene(persons: &[Pose3D], noise: &NoiseParams, seed: u64) -> Result<(Vec<Pose3D>, Vec<Pose3D>)> {
    for (what, v) in [("td_sigma_mm", noise.td_sigma_mm), ("bu_sigma_mm", noise.bu_sigma_mm)] {
        if !(v >= 0.0 && v.is_finite()) {
            return Err(Error::Domain { what, value: v });
        }
    }
    if !(0.0..=1.0).contains(&noise.mask_prob) {
        return Err(Error::Domain {
            what: "mask probability",
            value: noise.mask_prob,
        });
    }
    if let Some(&i) = noise.td_dropout.iter().chain(&noise.bu_dropout).find(|&&i| i >= persons.len()) {
        return Err(Error::IndexOutOfRange {
            index: i,
            count: persons.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let td_noise = Normal::new(0.0, noise.td_sigma_mm).expect("validated sigma");
    let bu_noise = Normal::new(0.0, noise.bu_sigma_mm).expect("validated sigma");
    let mut td = Vec::new();
    let mut bu = Vec::new();
    for (i, p) in persons.iter().enumerate() {
        // both draws happen regardless of dropout to keep streams aligned
        let t = perturb(p, &td_noise, noise.mask_prob, &mut rng);
        let b = perturb(p, &bu_noise, noise.mask_prob, &mut rng);
        if !noise.td_dropout.contains(&i) {
            td.push(t);
        }
        if !noise.bu_dropout.contains(&i) {
            bu.push(b);
        }
    }
    Ok((td, bu))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_camera() -> CameraIntrinsics {
        CameraIntrinsics::new(500.0, 500.0, 320.0, 240.0, 640, 480).unwrap()
    }

    fn params() -> SynthParams {
        SynthParams {
            depth_range_mm: (4000.0, 12000.0),
            ..SynthParams::default()
        }
    }

    #[test]
    fn deterministic() {
        let (cam, sk) = (small_camera(), Skeleton::default_body());
        let a = generate_scene(5, 3, &cam, &sk, &params()).unwrap();
        let b = generate_scene(5, 3, &cam, &sk, &params()).unwrap();
        assert_eq!(a, b);
        let c = generate_scene(6, 3, &cam, &sk, &params()).unwrap();
        assert_ne!(a.persons, c.persons);
    }

    #[test]
    fn bones_within_ranges() {
        let (cam, sk) = (small_camera(), Skeleton::default_body());
        let s = generate_scene(1, 2, &cam, &sk, &params()).unwrap();
        for p in &s.persons {
            for j in 0..sk.joint_count() {
                if let Some(b) = sk.bone(j) {
                    let len = (p.joints[j] - p.joints[sk.parent(j)]).norm();
                    assert!(len >= b.min_mm - 1e-9 && len <= b.max_mm + 1e-9);
                }
            }
        }
    }

    #[test]
    fn maps_hold_exact_values_at_joints() {
        let (cam, sk) = (small_camera(), Skeleton::default_body());
        let s = generate_scene(9, 4, &cam, &sk, &params()).unwrap();
        let root = sk.root_index();
        let w = cam.width;
        for (i, (p, px)) in s.persons.iter().zip(s.projections()).enumerate() {
            for j in 0..sk.joint_count() {
                let (x, y) = rounded(&px[j]);
                assert_eq!(s.maps.tags.channel(j)[y * w + x], person_tag(i, 4) as f32);
                let rel = s.maps.rel_depth.channel(j)[y * w + x] as f64;
                let want = if j == root { 0.0 } else { p.joints[j].z - p.joints[root].z };
                assert!((rel - want).abs() < 1e-3);
            }
            let (x, y) = rounded(&px[root]);
            assert!((s.maps.root_depth.data()[y * w + x] as f64 - p.joints[root].z).abs() < 1e-3);
        }
    }

    #[test]
    fn single_person_argmax() {
        let (cam, sk) = (small_camera(), Skeleton::default_body());
        let s = generate_scene(2, 1, &cam, &sk, &params()).unwrap();
        let px = &s.projections()[0];
        for j in 0..sk.joint_count() {
            let ch = s.maps.heatmaps.channel(j);
            let arg = (0..ch.len()).max_by(|&a, &b| ch[a].total_cmp(&ch[b])).unwrap();
            let (x, y) = rounded(&px[j]);
            assert_eq!(arg, y * cam.width + x);
        }
    }

    #[test]
    fn placement_failure() {
        let (cam, sk) = (small_camera(), Skeleton::default_body());
        let crowded = SynthParams {
            min_separation_mm: 1e9,
            ..params()
        };
        assert!(matches!(
            generate_scene(0, 2, &cam, &sk, &crowded),
            Err(Error::Placement { attempts: MAX_PLACEMENT_ATTEMPTS, .. })
        ));
        assert!(generate_scene(0, 0, &cam, &sk, &params()).is_err());
    }

    #[test]
    fn perturbation_contract() {
        let (cam, sk) = (small_camera(), Skeleton::default_body());
        let s = generate_scene(3, 3, &cam, &sk, &params()).unwrap();
        let (td, bu) = perturb_scene(&s.persons, &NoiseParams::default(), 1).unwrap();
        assert_eq!(td, s.persons);
        assert_eq!(bu, s.persons);
        let drop = NoiseParams {
            td_dropout: vec![1],
            ..NoiseParams::default()
        };
        let (td, bu) = perturb_scene(&s.persons, &drop, 1).unwrap();
        assert_eq!((td.len(), bu.len()), (2, 3));
        assert_eq!(td[1], s.persons[2]);
        let noisy = NoiseParams {
            td_sigma_mm: 20.0,
            bu_sigma_mm: 20.0,
            ..NoiseParams::default()
        };
        assert_eq!(perturb_scene(&s.persons, &noisy, 4).unwrap(), perturb_scene(&s.persons, &noisy, 4).unwrap());
        let bad = NoiseParams {
            bu_dropout: vec![7],
            ..NoiseParams::default()
        };
        assert!(perturb_scene(&s.persons, &bad, 0).is_err());
    }
}
