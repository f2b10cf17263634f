use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};

/// Least-squares similarity transform `y ~ s R x + t` with `det R = +1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Similarity {
    pub scale: f64,
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Similarity {
    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.scale * (self.rotation * p) + self.translation
    }
}

const RANK_TOL: f64 = 1e-10;

/// Closed-form alignment of `source` onto `target` from the SVD of their
/// cross-covariance. Fails when either point set spans fewer than two
/// dimensions.
pub fn align_similarity(source: &[Vector3<f64>], target: &[Vector3<f64>]) -> Result<Similarity> {
    if source.len() != target.len() {
        return Err(Error::JointCountMismatch {
            left: source.len(),
            right: target.len(),
        });
    }
    let n = source.len();
    if n < 3 {
        return Err(Error::DegenerateAlignment(format!("{n} points")));
    }
    let inv_n = 1.0 / n as f64;
    let mu_x = source.iter().sum::<Vector3<f64>>() * inv_n;
    let mu_y = target.iter().sum::<Vector3<f64>>() * inv_n;
    let mut cov = Matrix3::zeros();
    let mut var_x = 0.0;
    let mut var_y = 0.0;
    for (x, y) in source.iter().zip(target) {
        let (dx, dy) = (x - mu_x, y - mu_y);
        cov += dy * dx.transpose();
        var_x += dx.norm_squared();
        var_y += dy.norm_squared();
    }
    cov *= inv_n;
    var_x *= inv_n;
    var_y *= inv_n;

    for (name, points, mu, var) in [("source", source, mu_x, var_x), ("target", target, mu_y, var_y)] {
        let mut scatter = Matrix3::zeros();
        for p in points {
            let d = p - mu;
            scatter += d * d.transpose();
        }
        let sv = scatter.singular_values();
        let mut sorted = [sv[0], sv[1], sv[2]];
        sorted.sort_by(|a, b| b.total_cmp(a));
        if !(var > 0.0) || sorted[1] <= RANK_TOL * sorted[0] {
            return Err(Error::DegenerateAlignment(format!("{name} points span fewer than two dimensions")));
        }
    }

    let svd = cov.svd(true, true);
    let (u, v_t) = (svd.u.unwrap(), svd.v_t.unwrap());
    let mut d = Vector3::repeat(1.0);
    if (u.determinant() * v_t.determinant()) < 0.0 {
        // flip the axis of the smallest singular value
        let smallest = (0..3).min_by(|&a, &b| svd.singular_values[a].total_cmp(&svd.singular_values[b])).unwrap();
        d[smallest] = -1.0;
    }
    let rotation = u * Matrix3::from_diagonal(&d) * v_t;
    let scale = svd.singular_values.dot(&d) / var_x;
    let translation = mu_y - scale * (rotation * mu_x);
    Ok(Similarity {
        scale,
        rotation,
        translation,
    })
}
