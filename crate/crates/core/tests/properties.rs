#![allow(clippy::needless_range_loop)]

use std::collections::VecDeque;

use nalgebra::{Rotation3, Vector2, Vector3};
use posefuse::assignment::{hungarian_assign, SimMatrix};
use posefuse::fuse::{hard_fuse, linear_fuse, PosePair};
use posefuse::geometry::{backproject_point, project_point, reprojection_error, rotate_about_vertical, ssl_weights, SoftmaxSign};
use posefuse::graph::gcn_adjacency;
use posefuse::matching::{match_pose_sets, oks, MatchParams, ScaleMode};
use posefuse::metrics::{ap_root, f1_at, mpjpe, pa_mpjpe, pair_with_gt, pck, Pairing};
use posefuse::tensor::Tensor;
use posefuse::{CameraIntrinsics, Pose2D, Pose3D, Skeleton};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_pose(r: &mut impl Rng, k: usize, center: Vector3<f64>, spread: f64) -> Pose3D {
    let joints = (0..k)
        .map(|_| center + Vector3::new(r.random_range(-spread..spread), r.random_range(-spread..spread), r.random_range(-spread..spread)))
        .collect();
    let conf = (0..k).map(|_| r.random_range(0.2..1.0)).collect();
    Pose3D::new(joints, conf).unwrap()
}

fn placed(r: &mut impl Rng, k: usize, half_width: f64, z: f64) -> Pose3D {
    let x = r.random_range(-half_width..half_width);
    random_pose(r, k, Vector3::new(x, 0.0, z), 300.0)
}

fn bfs_hops(sk: &Skeleton, i: usize, j: usize) -> usize {
    let k = sk.joint_count();
    let mut adj = vec![Vec::new(); k];
    for c in 0..k {
        let p = sk.parent(c);
        if p != c {
            adj[c].push(p);
            adj[p].push(c);
        }
    }
    let mut dist = vec![usize::MAX; k];
    dist[i] = 0;
    let mut q = VecDeque::from([i]);
    while let Some(u) = q.pop_front() {
        for &v in &adj[u] {
            if dist[v] == usize::MAX {
                dist[v] = dist[u] + 1;
                q.push_back(v);
            }
        }
    }
    dist[j]
}

#[test]
fn hop_distance_matches_bfs_and_is_a_metric() {
    let sk = Skeleton::default_body();
    let k = sk.joint_count();
    for i in 0..k {
        for j in 0..k {
            let h = sk.hop_distance(i, j).unwrap();
            assert_eq!(h, bfs_hops(&sk, i, j));
            assert_eq!(h, sk.hop_distance(j, i).unwrap());
            for m in 0..k {
                assert!(h <= sk.hop_distance(i, m).unwrap() + sk.hop_distance(m, j).unwrap());
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn tensor_round_trip_is_bit_exact(
        dims in prop::collection::vec(0usize..5, 0..=4),
        seed in any::<u64>(),
    ) {
        let n: usize = dims.iter().product();
        let mut r = rng(seed);
        let data: Vec<f32> = (0..n).map(|_| f32::from_bits(r.random::<u32>() & 0x7f7f_ffff)).collect();
        let t = Tensor::new(dims.clone(), data).unwrap();
        let back = Tensor::from_bytes(&t.to_bytes()).unwrap();
        prop_assert_eq!(back.dims(), t.dims());
        let same = back.data().iter().zip(t.data()).all(|(a, b)| a.to_bits() == b.to_bits());
        prop_assert!(same);
    }

    #[test]
    fn oks_is_scale_invariant(
        d in prop::array::uniform3(-500.0f64..500.0),
        s in 50.0f64..2000.0,
        lambda_exp in -4i32..4,
        sigma in 0.1f64..2.0,
    ) {
        // power-of-two factors keep the scaling exact in floating point
        let lambda = 2f64.powi(lambda_exp);
        let a = Vector3::new(10.0, -20.0, 3000.0);
        let b = a + Vector3::from(d);
        let base = oks(&a, &b, s, sigma).unwrap();
        let scaled = oks(&(a * lambda), &(b * lambda), s * lambda, sigma).unwrap();
        prop_assert_eq!(base, scaled);
    }
}

fn brute_force_max(sim: &[Vec<f64>]) -> f64 {
    let (rows, cols) = (sim.len(), sim[0].len());
    let (small, large, transposed) = if rows <= cols { (rows, cols, false) } else { (cols, rows, true) };
    let mut best = f64::NEG_INFINITY;
    let mut used = vec![false; large];
    fn rec(i: usize, small: usize, used: &mut [bool], acc: f64, best: &mut f64, f: &dyn Fn(usize, usize) -> f64) {
        if i == small {
            *best = best.max(acc);
            return;
        }
        for c in 0..used.len() {
            if !used[c] {
                used[c] = true;
                rec(i + 1, small, used, acc + f(i, c), best, f);
                used[c] = false;
            }
        }
    }
    let f = |i: usize, c: usize| if transposed { sim[c][i] } else { sim[i][c] };
    rec(0, small, &mut used, 0.0, &mut best, &f);
    best
}

#[test]
fn hungarian_equals_exhaustive_search() {
    let mut r = rng(7);
    for case in 0..240 {
        let rows = r.random_range(1..=8);
        let cols = r.random_range(1..=8);
        // small integer entries make ties common and totals exact
        let sim: Vec<Vec<f64>> = (0..rows).map(|_| (0..cols).map(|_| r.random_range(0..20) as f64).collect()).collect();
        let m = SimMatrix::from_rows(&sim).unwrap();
        let pairs = hungarian_assign(&m).unwrap();
        assert_eq!(pairs.len(), rows.min(cols), "case {case}");
        assert_eq!(m.total(&pairs), brute_force_max(&sim), "case {case}");
    }
}

#[test]
fn raising_the_threshold_never_adds_pairs() {
    let mut r = rng(8);
    for _ in 0..100 {
        let k = 16;
        let bu: Vec<Pose3D> = (0..r.random_range(0..6))
            .map(|_| placed(&mut r, k, 2000.0, 6000.0))
            .collect();
        let td: Vec<Pose3D> = (0..r.random_range(0..6))
            .map(|_| placed(&mut r, k, 2000.0, 6000.0))
            .collect();
        let mut last = usize::MAX;
        for thr in [0.0, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0] {
            let params = MatchParams { threshold: Some(thr), ..MatchParams::default() };
            let n = match_pose_sets(&bu, &td, &params).unwrap().pairs.len();
            assert!(n <= last);
            last = n;
        }
    }
}

#[test]
fn swapping_inputs_transposes_the_match_under_a_global_scale() {
    let mut r = rng(9);
    let params = MatchParams { scale: ScaleMode::Global(400.0), ..MatchParams::default() };
    for _ in 0..100 {
        let bu: Vec<Pose3D> = (0..r.random_range(1..5))
            .map(|_| placed(&mut r, 8, 3000.0, 7000.0))
            .collect();
        let td: Vec<Pose3D> = (0..r.random_range(1..5))
            .map(|_| placed(&mut r, 8, 3000.0, 7000.0))
            .collect();
        let ab = match_pose_sets(&bu, &td, &params).unwrap();
        let ba = match_pose_sets(&td, &bu, &params).unwrap();
        let mut want = ab.swapped();
        let mut got = ba;
        want.pairs.sort_by_key(|p| (p.bu_index, p.td_index));
        got.pairs.sort_by_key(|p| (p.bu_index, p.td_index));
        assert_eq!(got.unmatched_bu, want.unmatched_bu);
        assert_eq!(got.unmatched_td, want.unmatched_td);
        let key = |m: &posefuse::matching::MatchResult| m.pairs.iter().map(|p| (p.bu_index, p.td_index)).collect::<Vec<_>>();
        assert_eq!(key(&got), key(&want));
    }
}

#[test]
fn projection_round_trip_and_rotation_isometry() {
    let cam = CameraIntrinsics::full_hd();
    let mut r = rng(10);
    for _ in 0..1000 {
        let p = Vector3::new(r.random_range(-3000.0..3000.0), r.random_range(-2000.0..2000.0), r.random_range(500.0..20000.0));
        let px = project_point(&p, &cam);
        let back = backproject_point(&px, p.z, &cam);
        assert!((back - p).norm() <= 1e-6);
        assert!((project_point(&back, &cam) - px).norm() <= 1e-9);
    }
    for _ in 0..200 {
        let pose = random_pose(&mut r, 16, Vector3::new(0.0, 0.0, 5000.0), 800.0);
        let theta = r.random_range(-std::f64::consts::PI..std::f64::consts::PI);
        let rot = rotate_about_vertical(&pose, theta, 15);
        assert_eq!(rot.joints[15], pose.joints[15]);
        for i in 0..16 {
            for j in 0..16 {
                let (a, b) = ((pose.joints[i] - pose.joints[j]).norm(), (rot.joints[i] - rot.joints[j]).norm());
                assert!((a - b).abs() <= 1e-9);
            }
        }
    }
}

#[test]
fn reprojection_ignores_zero_confidence_joints() {
    let cam = CameraIntrinsics::full_hd();
    let mut r = rng(11);
    for _ in 0..100 {
        let pose = random_pose(&mut r, 6, Vector3::new(0.0, 0.0, 5000.0), 500.0);
        let joints: Vec<Vector2<f64>> = (0..6).map(|_| Vector2::new(r.random_range(0.0..1920.0), r.random_range(0.0..1080.0))).collect();
        let mut conf: Vec<f64> = (0..6).map(|_| r.random_range(0.1..1.0)).collect();
        conf[2] = 0.0;
        let vis: Vec<bool> = conf.iter().map(|c| *c > 0.0).collect();
        let a = Pose2D::new(joints.clone(), conf.clone(), vis.clone()).unwrap();
        let mut moved = joints;
        moved[2] += Vector2::new(500.0, -300.0);
        let b = Pose2D::new(moved, conf, vis).unwrap();
        let mut far = pose.clone();
        far.joints[2] += Vector3::new(900.0, 0.0, 0.0);
        assert_eq!(reprojection_error(&pose, &a, &cam).unwrap(), reprojection_error(&far, &b, &cam).unwrap());
    }
}

#[test]
fn ssl_weights_sum_to_two_and_favour_small_errors() {
    let mut r = rng(12);
    for _ in 0..200 {
        let b = r.random_range(1..20);
        let e_rep: Vec<f64> = (0..b).map(|_| r.random_range(0.0..50.0)).collect();
        let e_mp: Vec<f64> = (0..b).map(|_| r.random_range(0.0..50.0)).collect();
        let epoch = r.random_range(1.0..20.0);
        let w = ssl_weights(&e_rep, &e_mp, epoch, SoftmaxSign::Curriculum).unwrap();
        assert!((w.iter().sum::<f64>() - 2.0).abs() <= 1e-12);
        // the E_rep softmax component alone is monotone; isolate it with E_mp = 0
        let only_rep = ssl_weights(&e_rep, &vec![0.0; b], epoch, SoftmaxSign::Curriculum).unwrap();
        for i in 0..b {
            for j in 0..b {
                if e_rep[i] > e_rep[j] {
                    assert!(only_rep[i] <= only_rep[j]);
                }
            }
        }
    }
}

#[test]
fn adjacency_row_scaling_and_decay() {
    let sk = Skeleton::default_body();
    let k = sk.joint_count();
    let mut r = rng(13);
    for _ in 0..120 {
        let (h, w) = (6, 7);
        let data: Vec<f32> = (0..k * h * w).map(|_| r.random_range(0.05f32..1.0)).collect();
        let hm = Tensor::new(vec![k, h, w], data).unwrap();
        let a = gcn_adjacency(&hm, &sk).unwrap();
        let i = r.random_range(0..k);
        // powers of two keep the f32 maps exactly scaled
        let lambda = 2f32.powi(-r.random_range(0..4));
        let mut scaled = hm.clone();
        scaled.channel_mut(i).iter_mut().for_each(|v| *v *= lambda);
        let b = gcn_adjacency(&scaled, &sk).unwrap();
        for row in 0..k {
            for col in 0..k {
                let want = if row == i { a.get(row, col) * lambda as f64 } else { a.get(row, col) };
                assert_eq!(b.get(row, col), want);
            }
        }
        for j in 0..k {
            for m in 0..k {
                if sk.hop_distance(i, j).unwrap() < sk.hop_distance(i, m).unwrap() {
                    assert!(a.get(i, j) > a.get(i, m));
                }
            }
        }
    }
}

/// Least-squares similarity error for a fixed rotation, with scale and
/// translation in closed form.
fn aligned_mean_error(src: &[Vector3<f64>], dst: &[Vector3<f64>], rot: &Rotation3<f64>) -> (f64, f64) {
    let n = src.len() as f64;
    let ms = src.iter().sum::<Vector3<f64>>() / n;
    let md = dst.iter().sum::<Vector3<f64>>() / n;
    let num: f64 = src.iter().zip(dst).map(|(s, d)| (rot * (s - ms)).dot(&(d - md))).sum();
    let den: f64 = src.iter().map(|s| (s - ms).norm_squared()).sum();
    let scale = (num / den).max(0.0);
    let mapped: Vec<Vector3<f64>> = src.iter().map(|s| scale * (rot * (s - ms)) + md).collect();
    let sse = mapped.iter().zip(dst).map(|(m, d)| (m - d).norm_squared()).sum();
    let mean = mapped.iter().zip(dst).map(|(m, d)| (m - d).norm()).sum::<f64>() / n;
    (sse, mean)
}

fn search_rotation(src: &[Vector3<f64>], dst: &[Vector3<f64>]) -> f64 {
    let steps = 12;
    let angle = |i: usize| -std::f64::consts::PI + 2.0 * std::f64::consts::PI * i as f64 / steps as f64;
    let mut best = Rotation3::identity();
    let mut best_sse = f64::INFINITY;
    for a in 0..steps {
        for b in 0..steps {
            for c in 0..steps {
                let rot = Rotation3::from_euler_angles(angle(a), angle(b) / 2.0, angle(c));
                let (sse, _) = aligned_mean_error(src, dst, &rot);
                if sse < best_sse {
                    best_sse = sse;
                    best = rot;
                }
            }
        }
    }
    let mut step = 0.3;
    while step > 1e-12 {
        let mut improved = false;
        for axis in [Vector3::x_axis(), Vector3::y_axis(), Vector3::z_axis()] {
            for sign in [-1.0, 1.0] {
                let cand = Rotation3::from_axis_angle(&axis, sign * step) * best;
                let (sse, _) = aligned_mean_error(src, dst, &cand);
                if sse < best_sse {
                    best_sse = sse;
                    best = cand;
                    improved = true;
                }
            }
        }
        if !improved {
            step /= 2.0;
        }
    }
    aligned_mean_error(src, dst, &best).1
}

#[test]
fn pa_mpjpe_matches_rotation_search_and_never_exceeds_mpjpe() {
    let mut r = rng(14);
    let noise = Normal::new(0.0, 30.0).unwrap();
    for case in 0..30 {
        let gt = random_pose(&mut r, 16, Vector3::new(0.0, 0.0, 5000.0), 600.0);
        let rot = Rotation3::from_euler_angles(r.random_range(-3.0..3.0), r.random_range(-1.5..1.5), r.random_range(-3.0..3.0));
        let s = r.random_range(0.5..2.0);
        let joints = gt
            .joints
            .iter()
            .map(|j| s * (rot * j) + Vector3::new(noise.sample(&mut r), noise.sample(&mut r), noise.sample(&mut r)))
            .collect();
        let pred = Pose3D::new(joints, gt.confidence.clone()).unwrap();
        let got = pa_mpjpe(&pred, &gt).unwrap();
        let oracle = search_rotation(&pred.joints, &gt.joints);
        assert!((got - oracle).abs() <= 1e-3, "case {case}: {got} vs {oracle}");
        assert!(got <= mpjpe(&pred, &gt, 15).unwrap() + 1e-6);
    }
}

fn scene(r: &mut impl Rng, n: usize) -> Vec<Pose3D> {
    (0..n)
        .map(|i| random_pose(r, 16, Vector3::new(-4000.0 + 2000.0 * i as f64, 0.0, 6000.0), 400.0))
        .collect()
}

fn jitter(r: &mut impl Rng, poses: &[Pose3D], sd: f64) -> Vec<Pose3D> {
    let noise = Normal::new(0.0, sd).unwrap();
    poses
        .iter()
        .map(|p| {
            let joints = p.joints.iter().map(|j| j + Vector3::new(noise.sample(r), noise.sample(r), noise.sample(r))).collect();
            Pose3D::new(joints, p.confidence.clone()).unwrap()
        })
        .collect()
}

#[test]
fn pck_is_monotone_and_translation_invariant() {
    let mut r = rng(15);
    let pairing = Pairing::default();
    for _ in 0..50 {
        let gt = scene(&mut r, 4);
        let pred = jitter(&mut r, &gt, 60.0);
        let ev = pair_with_gt(&pred, &gt, &pairing, 15).unwrap();
        let mut last = 0.0;
        for thr in [0.0, 25.0, 50.0, 100.0, 150.0, 300.0] {
            let v = pck(&pred, &gt, &ev, thr, 15).unwrap();
            assert!(v >= last && (0.0..=100.0).contains(&v));
            last = v;
        }
        let t = Vector3::new(r.random_range(-100.0..100.0), r.random_range(-100.0..100.0), r.random_range(-100.0..100.0));
        let moved: Vec<Pose3D> = pred.iter().map(|p| p.translated(&t)).collect();
        assert_eq!(pck(&pred, &gt, &ev, 150.0, 15).unwrap(), pck(&moved, &gt, &ev, 150.0, 15).unwrap());
    }
}

#[test]
fn ap_and_f1_ignore_person_order() {
    let mut r = rng(16);
    let pairing = Pairing::default();
    for _ in 0..50 {
        let gt = scene(&mut r, 5);
        let mut pred = jitter(&mut r, &gt, 150.0);
        pred.truncate(r.random_range(1..=5));
        pred.extend(scene(&mut r, 1).into_iter().map(|p| p.translated(&Vector3::new(0.0, 3000.0, 0.0))));
        let f1 = |p: &[Pose3D], g: &[Pose3D]| f1_at(p, g, &pair_with_gt(p, g, &pairing, 15).unwrap(), 0.2).unwrap();
        let (ap, f) = (ap_root(&pred, &gt, 250.0, 15).unwrap(), f1(&pred, &gt));
        let mut pred2 = pred.clone();
        let mut gt2 = gt.clone();
        pred2.shuffle(&mut r);
        gt2.shuffle(&mut r);
        assert_eq!(ap, ap_root(&pred2, &gt2, 250.0, 15).unwrap());
        assert!((f - f1(&pred2, &gt2)).abs() <= 1e-12);
    }
}

#[test]
fn linear_fusion_is_convex_and_idempotent() {
    let mut r = rng(17);
    for _ in 0..200 {
        let td = random_pose(&mut r, 16, Vector3::new(0.0, 0.0, 5000.0), 600.0);
        let mut bu = random_pose(&mut r, 16, Vector3::new(100.0, 0.0, 5200.0), 600.0);
        bu.confidence[3] = 0.0;
        let pair = PosePair::new(Some(td.clone()), Some(bu.clone()), 1.0).unwrap();
        let fused = linear_fuse(&pair);
        for k in 0..16 {
            let seg = bu.joints[k] - td.joints[k];
            let off = fused.joints[k] - td.joints[k];
            let t = if seg.norm() > 0.0 { off.dot(&seg) / seg.norm_squared() } else { 0.0 };
            assert!((-1e-12..=1.0 + 1e-12).contains(&t));
            assert!((off - seg * t).norm() <= 1e-9);
        }
        let same = PosePair::new(Some(td.clone()), Some(td.clone()), 1.0).unwrap();
        assert_eq!(linear_fuse(&same).joints, td.joints);
        let hard = hard_fuse(&same, 15);
        for k in 0..16 {
            assert!((hard.joints[k] - td.joints[k]).norm() <= 1e-9);
        }
    }
}

#[test]
fn equal_confidence_fusion_halves_the_noise_variance() {
    let sd = 20.0;
    let noise = Normal::new(0.0, sd).unwrap();
    let mut errors = Vec::new();
    for seed in 0..200u64 {
        let mut r = rng(1000 + seed);
        let truth = random_pose(&mut r, 16, Vector3::new(0.0, 0.0, 5000.0), 600.0);
        let conf = vec![0.8; 16];
        let noisy = |r: &mut ChaCha8Rng| {
            let j = truth.joints.iter().map(|j| j + Vector3::new(noise.sample(r), noise.sample(r), noise.sample(r))).collect();
            Pose3D::new(j, conf.clone()).unwrap()
        };
        let (td, bu) = (noisy(&mut r), noisy(&mut r));
        let fused = linear_fuse(&PosePair::new(Some(td), Some(bu), 1.0).unwrap());
        for k in 0..16 {
            errors.extend((fused.joints[k] - truth.joints[k]).iter().copied());
        }
    }
    let n = errors.len() as f64;
    let mean = errors.iter().sum::<f64>() / n;
    let var = errors.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let expected_var = sd * sd / 2.0;
    assert!(mean.abs() <= 3.0 * (expected_var / n).sqrt(), "mean {mean}");
    // sample variance has standard error var * sqrt(2 / (n - 1))
    assert!((var - expected_var).abs() <= 3.0 * expected_var * (2.0 / (n - 1.0)).sqrt(), "var {var}");
}
