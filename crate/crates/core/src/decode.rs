//! Heatmap / ID-tag / depth-map decoding into grouped camera-centric poses.

use std::cmp::Ordering;
use std::path::Path;

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::backproject_point;
use crate::skeleton::Skeleton;
use crate::tensor::{read_tensor, write_tensor, Tensor};
use crate::types::{CameraIntrinsics, Detection, Pose2D, Pose3D};

/// The four maps produced by the bottom-up branch for one frame.
///
/// Relative depth maps hold `z_k - z_root` in millimetres; the root depth map
/// holds absolute camera depth.
#[derive(Debug, Clone, PartialEq)]
pub struct BottomUpMaps {
    pub heatmaps: Tensor,
    pub tags: Tensor,
    pub root_depth: Tensor,
    pub rel_depth: Tensor,
}

impl BottomUpMaps {
    pub fn new(heatmaps: Tensor, tags: Tensor, root_depth: Tensor, rel_depth: Tensor) -> Result<Self> {
        let (k, h, w) = heatmaps.chw()?;
        if tags.dims() != heatmaps.dims() || rel_depth.dims() != heatmaps.dims() {
            return Err(Error::DimMismatch(format!(
                "heatmaps {:?}, tags {:?}, relative depth {:?}",
                heatmaps.dims(),
                tags.dims(),
                rel_depth.dims()
            )));
        }
        if root_depth.hw()? != (h, w) {
            return Err(Error::DimMismatch(format!(
                "root depth {:?} vs heatmaps {k}x{h}x{w}",
                root_depth.dims()
            )));
        }
        if let Some(v) = heatmaps.data().iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidArgument(format!("heatmap value {v} outside [0, 1]")));
        }
        Ok(BottomUpMaps {
            heatmaps,
            tags,
            root_depth,
            rel_depth,
        })
    }

    pub fn joint_count(&self) -> usize {
        self.heatmaps.dims()[0]
    }

    /// `(height, width)`
    pub fn size(&self) -> (usize, usize) {
        (self.heatmaps.dims()[1], self.heatmaps.dims()[2])
    }

    pub fn file_names(frame: &str) -> [String; 4] {
        [
            format!("{frame}.hm.ptns"),
            format!("{frame}.tag.ptns"),
            format!("{frame}.rootd.ptns"),
            format!("{frame}.reld.ptns"),
        ]
    }

    pub fn load(dir: &Path, frame: &str) -> Result<Self> {
        let [hm, tag, root, rel] = Self::file_names(frame);
        BottomUpMaps::new(
            read_tensor(dir.join(hm))?,
            read_tensor(dir.join(tag))?,
            read_tensor(dir.join(root))?,
            read_tensor(dir.join(rel))?,
        )
    }

    pub fn save(&self, dir: &Path, frame: &str) -> Result<()> {
        let [hm, tag, root, rel] = Self::file_names(frame);
        write_tensor(dir.join(hm), &self.heatmaps)?;
        write_tensor(dir.join(tag), &self.tags)?;
        write_tensor(dir.join(root), &self.root_depth)?;
        write_tensor(dir.join(rel), &self.rel_depth)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecodeParams {
    pub min_score: f64,
    pub max_people: usize,
    pub tag_gap: f64,
}

impl Default for DecodeParams {
    fn default() -> Self {
        DecodeParams {
            min_score: 0.1,
            max_people: 30,
            tag_gap: 1.0,
        }
    }
}

/// One joint candidate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Peak {
    /// Integer pixel of the local maximum.
    pub px: usize,
    pub py: usize,
    /// Sub-pixel refined location.
    pub x: f64,
    pub y: f64,
    pub score: f64,
    pub tag: f64,
}

/// Candidates per joint, each list sorted by descending score.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PeakSet {
    pub joints: Vec<Vec<Peak>>,
}

/// Half-open pixel rectangle `[x0, x1) x [y0, y1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Region {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl Region {
    pub fn full(height: usize, width: usize) -> Self {
        Region {
            x0: 0,
            y0: 0,
            x1: width,
            y1: height,
        }
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        x >= self.x0 && x < self.x1 && y >= self.y0 && y < self.y1
    }

    /// Grows `det` by `ratio` about its centre and clips it to the image.
    pub fn from_detection(det: &Detection, ratio: f64, height: usize, width: usize) -> Result<Self> {
        if !(ratio >= 1.0) {
            return Err(Error::InvalidArgument(format!("enlarge ratio {ratio} < 1")));
        }
        let (cx, cy) = det.center();
        let [bx0, by0, bx1, by1] = det.bbox;
        let hw = (bx1 - bx0) * ratio / 2.0;
        let hh = (by1 - by0) * ratio / 2.0;
        let x0 = (cx - hw).ceil().max(0.0);
        let y0 = (cy - hh).ceil().max(0.0);
        let x1 = ((cx + hw).floor() + 1.0).min(width as f64);
        let y1 = ((cy + hh).floor() + 1.0).min(height as f64);
        if !(x0 < x1 && y0 < y1) {
            return Err(Error::EmptyRegion);
        }
        Ok(Region {
            x0: x0 as usize,
            y0: y0 as usize,
            x1: x1 as usize,
            y1: y1 as usize,
        })
    }
}

fn by_score(a: &Peak, b: &Peak) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then(a.px.cmp(&b.px))
        .then(a.py.cmp(&b.py))
}

fn check_peak_args(heatmaps: &Tensor, tags: &Tensor, min_score: f64, max_people: usize) -> Result<()> {
    heatmaps.chw()?;
    if tags.dims() != heatmaps.dims() {
        return Err(Error::DimMismatch(format!(
            "heatmaps {:?} vs tag maps {:?}",
            heatmaps.dims(),
            tags.dims()
        )));
    }
    if !(min_score > 0.0 && min_score < 1.0) {
        return Err(Error::InvalidArgument(format!("min_score {min_score} outside (0, 1)")));
    }
    if max_people == 0 {
        return Err(Error::InvalidArgument("max_people must be at least 1".into()));
    }
    Ok(())
}

/// Strict 3x3 local maxima of each heatmap channel scoring at least `min_score`.
pub fn extract_peaks(heatmaps: &Tensor, tags: &Tensor, min_score: f64, max_people: usize) -> Result<PeakSet> {
    check_peak_args(heatmaps, tags, min_score, max_people)?;
    let (_, h, w) = heatmaps.chw()?;
    Ok(peaks_in(heatmaps, tags, min_score, max_people, Region::full(h, w)))
}

/// Peak extraction restricted to `region`; pixels outside it are treated as
/// absent, so a peak on the region border only competes with its in-region
/// neighbours.
pub fn extract_peaks_in(
    heatmaps: &Tensor,
    tags: &Tensor,
    min_score: f64,
    max_people: usize,
    region: Region,
) -> Result<PeakSet> {
    check_peak_args(heatmaps, tags, min_score, max_people)?;
    let (_, h, w) = heatmaps.chw()?;
    if region.x1 > w || region.y1 > h || region.x0 >= region.x1 || region.y0 >= region.y1 {
        return Err(Error::EmptyRegion);
    }
    Ok(peaks_in(heatmaps, tags, min_score, max_people, region))
}

fn peaks_in(heatmaps: &Tensor, tags: &Tensor, min_score: f64, max_people: usize, r: Region) -> PeakSet {
    let (k, _, w) = heatmaps.chw().unwrap();
    let mut joints = Vec::with_capacity(k);
    for c in 0..k {
        let map = heatmaps.channel(c);
        let tag = tags.channel(c);
        let at = |x: usize, y: usize| map[y * w + x];
        let mut found = Vec::new();
        for y in r.y0..r.y1 {
            for x in r.x0..r.x1 {
                let v = at(x, y);
                if (v as f64) < min_score {
                    continue;
                }
                let mut is_max = true;
                'nb: for dy in -1i64..=1 {
                    for dx in -1i64..=1 {
                        if dx == 0 && dy == 0 {
                            continue;
                        }
                        let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                        if nx < r.x0 as i64 || ny < r.y0 as i64 || nx >= r.x1 as i64 || ny >= r.y1 as i64 {
                            continue;
                        }
                        if at(nx as usize, ny as usize) >= v {
                            is_max = false;
                            break 'nb;
                        }
                    }
                }
                if !is_max {
                    continue;
                }
                // quarter-pixel shift toward the larger horizontal / vertical neighbour
                let mut fx = x as f64;
                let mut fy = y as f64;
                if x > r.x0 && x + 1 < r.x1 {
                    fx += 0.25 * sign(at(x + 1, y) - at(x - 1, y));
                }
                if y > r.y0 && y + 1 < r.y1 {
                    fy += 0.25 * sign(at(x, y + 1) - at(x, y - 1));
                }
                found.push(Peak {
                    px: x,
                    py: y,
                    x: fx,
                    y: fy,
                    score: v as f64,
                    tag: tag[y * w + x] as f64,
                });
            }
        }
        found.sort_by(by_score);
        found.truncate(max_people);
        joints.push(found);
    }
    PeakSet { joints }
}

fn sign(d: f32) -> f64 {
    if d > 0.0 {
        1.0
    } else if d < 0.0 {
        -1.0
    } else {
        0.0
    }
}

struct Group {
    pose: Pose2D,
    tag_sum: f64,
    count: usize,
}

impl Group {
    fn mean_tag(&self) -> f64 {
        self.tag_sum / self.count as f64
    }
}

/// Greedy associative-embedding grouping.
///
/// Joints are visited in skeleton order and candidates by descending score.
/// A candidate joins the person whose running mean tag is closest, provided
/// the gap is at most `tag_gap` and that person has no detection for this
/// joint yet; otherwise it starts a new person.
pub fn group_by_tags(peaks: &PeakSet, tag_gap: f64) -> Result<Vec<(Pose2D, f64)>> {
    if !(tag_gap > 0.0) {
        return Err(Error::InvalidArgument(format!("tag_gap {tag_gap} must be positive")));
    }
    let k = peaks.joints.len();
    let mut groups: Vec<Group> = Vec::new();
    for (j, candidates) in peaks.joints.iter().enumerate() {
        let mut sorted = candidates.clone();
        sorted.sort_by(by_score);
        for p in sorted {
            let best = groups
                .iter()
                .enumerate()
                .filter(|(_, g)| !g.pose.visible[j])
                .map(|(i, g)| (i, (g.mean_tag() - p.tag).abs()))
                .filter(|(_, d)| *d <= tag_gap)
                .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
            let idx = match best {
                Some((i, _)) => i,
                None => {
                    groups.push(Group {
                        pose: Pose2D::empty(k),
                        tag_sum: 0.0,
                        count: 0,
                    });
                    groups.len() - 1
                }
            };
            let g = &mut groups[idx];
            g.pose.set_joint(j, Vector2::new(p.x, p.y), p.score.clamp(0.0, 1.0));
            g.tag_sum += p.tag;
            g.count += 1;
        }
    }
    Ok(groups
        .into_iter()
        .map(|g| {
            let t = g.mean_tag();
            (g.pose, t)
        })
        .collect())
}

fn pixel_of(pose: &Pose2D, joint: usize, height: usize, width: usize) -> Result<(usize, usize)> {
    let p = pose.joints[joint];
    let (x, y) = (p.x.round(), p.y.round());
    if !(x >= 0.0 && y >= 0.0 && x < width as f64 && y < height as f64) {
        return Err(Error::OutOfBounds {
            joint,
            x: p.x,
            y: p.y,
            width,
            height,
        });
    }
    Ok((x as usize, y as usize))
}

/// Reads root and relative depths at the joint pixels and back-projects.
///
/// `z_root = root_depth(root pixel)` and `z_k = z_root + rel_depth_k(joint pixel)`.
/// Invisible joints are placed at the root with zero confidence.
pub fn retrieve_depths(
    pose: &Pose2D,
    maps: &BottomUpMaps,
    cam: &CameraIntrinsics,
    root: usize,
) -> Result<Pose3D> {
    let k = maps.joint_count();
    if pose.joint_count() != k {
        return Err(Error::JointCountMismatch {
            left: pose.joint_count(),
            right: k,
        });
    }
    if root >= k {
        return Err(Error::IndexOutOfRange { index: root, count: k });
    }
    if !pose.visible[root] {
        return Err(Error::MissingRoot(root));
    }
    let (h, w) = maps.size();
    let (rx, ry) = pixel_of(pose, root, h, w)?;
    let z_root = maps.root_depth.data()[ry * w + rx] as f64;
    if !(z_root > 0.0) {
        return Err(Error::NonPositiveDepth {
            joint: root,
            depth: z_root,
        });
    }
    let root_point = backproject_point(&pose.joints[root], z_root, cam);
    let mut joints = vec![root_point; k];
    let mut confidence = vec![0.0; k];
    for j in 0..k {
        if !pose.visible[j] {
            continue;
        }
        confidence[j] = pose.confidence[j];
        if j == root {
            continue;
        }
        let (x, y) = pixel_of(pose, j, h, w)?;
        let z = z_root + maps.rel_depth.channel(j)[y * w + x] as f64;
        if !(z > 0.0) {
            return Err(Error::NonPositiveDepth { joint: j, depth: z });
        }
        joints[j] = backproject_point(&pose.joints[j], z, cam);
    }
    Pose3D::new(joints, confidence)
}

/// Decodes the persons inside one detection box (grown by `enlarge_ratio`).
/// Coordinates are full-image pixels.
pub fn decode_topdown(
    heatmaps: &Tensor,
    tags: &Tensor,
    detection: &Detection,
    enlarge_ratio: f64,
    params: &DecodeParams,
) -> Result<Vec<Pose2D>> {
    let (_, h, w) = heatmaps.chw()?;
    let region = Region::from_detection(detection, enlarge_ratio, h, w)?;
    let peaks = extract_peaks_in(heatmaps, tags, params.min_score, params.max_people, region)?;
    Ok(group_by_tags(&peaks, params.tag_gap)?
        .into_iter()
        .map(|(p, _)| p)
        .collect())
}

/// Full bottom-up decode: peaks, grouping, then depth retrieval. Persons
/// whose root joint was not found cannot be placed in depth and are dropped.
pub fn decode_bottom_up(
    maps: &BottomUpMaps,
    cam: &CameraIntrinsics,
    skeleton: &Skeleton,
    params: &DecodeParams,
) -> Result<Vec<Pose3D>> {
    if skeleton.joint_count() != maps.joint_count() {
        return Err(Error::JointCountMismatch {
            left: skeleton.joint_count(),
            right: maps.joint_count(),
        });
    }
    let peaks = extract_peaks(&maps.heatmaps, &maps.tags, params.min_score, params.max_people)?;
    let root = skeleton.root_index();
    group_by_tags(&peaks, params.tag_gap)?
        .into_iter()
        .filter(|(p, _)| p.visible[root])
        .map(|(p, _)| retrieve_depths(&p, maps, cam, root))
        .collect()
}

/// Mean squared difference over all elements.
pub fn heatmap_loss(pred: &Tensor, gt: &Tensor) -> Result<f64> {
    if pred.dims() != gt.dims() {
        return Err(Error::DimMismatch(format!("{:?} vs {:?}", pred.dims(), gt.dims())));
    }
    if pred.data().is_empty() {
        return Ok(0.0);
    }
    let sum: f64 = pred
        .data()
        .iter()
        .zip(gt.data())
        .map(|(a, b)| {
            let d = *a as f64 - *b as f64;
            d * d
        })
        .sum();
    Ok(sum / pred.data().len() as f64)
}

/// Mean over persons and joints of the squared difference between the depth
/// map value at each joint's pixel and its ground-truth depth. `depth_maps`
/// is `K x H x W`; `locations[n][k]` is an `(x, y)` pixel.
pub fn depth_loss(depth_maps: &Tensor, locations: &[Vec<(usize, usize)>], gt: &[Vec<f64>]) -> Result<f64> {
    let (k, h, w) = depth_maps.chw()?;
    if locations.len() != gt.len() {
        return Err(Error::DimMismatch(format!(
            "{} location rows vs {} depth rows",
            locations.len(),
            gt.len()
        )));
    }
    if locations.is_empty() {
        return Ok(0.0);
    }
    let mut sum = 0.0;
    for (locs, depths) in locations.iter().zip(gt) {
        if locs.len() != k || depths.len() != k {
            return Err(Error::JointCountMismatch {
                left: k,
                right: locs.len().min(depths.len()),
            });
        }
        for (j, (&(x, y), &d)) in locs.iter().zip(depths).enumerate() {
            if x >= w || y >= h {
                return Err(Error::OutOfBounds {
                    joint: j,
                    x: x as f64,
                    y: y as f64,
                    width: w,
                    height: h,
                });
            }
            let diff = depth_maps.channel(j)[y * w + x] as f64 - d;
            sum += diff * diff;
        }
    }
    Ok(sum / (locations.len() * k) as f64)
}
