//! Second-order cone `{(t, u) : ‖u‖ ≤ t}`.

use crate::linalg::Matrix;

fn split(z: &[f64]) -> (f64, &[f64], f64) {
    let (t, u) = z.split_first().expect("second-order block has dim >= 1");
    let nu = u.iter().map(|x| x * x).sum::<f64>().sqrt();
    (*t, u, nu)
}

pub fn project(z: &[f64], out: &mut [f64]) {
    let (t, u, nu) = split(z);
    if nu <= t {
        out.copy_from_slice(z);
    } else if nu <= -t {
        out.iter_mut().for_each(|o| *o = 0.0);
    } else {
        let c = 0.5 * (1.0 + t / nu);
        out[0] = c * nu;
        for (o, ui) in out[1..].iter_mut().zip(u) {
            *o = c * ui;
        }
    }
}

/// Projection onto the polar cone, which is `-K` since the cone is self-dual.
pub fn project_polar(z: &[f64], out: &mut [f64]) {
    let neg: Vec<f64> = z.iter().map(|v| -v).collect();
    project(&neg, out);
    out.iter_mut().for_each(|o| *o = -*o);
}

/// Jacobian of the projection where it is differentiable, i.e. for
/// `‖u‖ > |t|`, with `w = u/‖u‖`:
///
/// ```text
/// ½ [ 1   wᵀ                      ]
///   [ w   (1 + t/‖u‖) I − (t/‖u‖) wwᵀ ]
/// ```
pub fn smooth_jacobian(t: f64, w: &[f64], nu: f64) -> Matrix {
    let m = w.len() + 1;
    let tau = t / nu;
    let mut j = Matrix::zeros(m, m);
    j[(0, 0)] = 0.5;
    for i in 0..w.len() {
        j[(0, i + 1)] = 0.5 * w[i];
        j[(i + 1, 0)] = 0.5 * w[i];
        for k in 0..w.len() {
            let id = if i == k { 1.0 + tau } else { 0.0 };
            j[(i + 1, k + 1)] = 0.5 * (id - tau * w[i] * w[k]);
        }
    }
    j
}

/// An element of the generalized Jacobian of the projection. On the cone
/// boundary (including the origin) the identity is chosen.
pub fn jacobian(z: &[f64]) -> Matrix {
    let m = z.len();
    let (t, u, nu) = split(z);
    if nu <= t {
        Matrix::identity(m, m)
    } else if nu <= -t {
        Matrix::zeros(m, m)
    } else {
        let w: Vec<f64> = u.iter().map(|x| x / nu).collect();
        smooth_jacobian(t, &w, nu)
    }
}

/// Signed distance-like violation `max(‖u‖ − t, 0)`.
pub fn violation(z: &[f64]) -> f64 {
    let (t, _, nu) = split(z);
    (nu - t).max(0.0)
}
