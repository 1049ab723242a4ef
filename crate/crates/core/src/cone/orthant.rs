//! Orthant blocks `{y : s·y ≥ 0}` with `s = +1` (nonnegative) or `s = -1` (nonpositive).

pub fn project(s: f64, z: &[f64], out: &mut [f64]) {
    for (o, &zi) in out.iter_mut().zip(z) {
        *o = s * (s * zi).max(0.0);
    }
}

pub fn project_polar(s: f64, z: &[f64], out: &mut [f64]) {
    for (o, &zi) in out.iter_mut().zip(z) {
        *o = s * (s * zi).min(0.0);
    }
}

/// Diagonal of a generalized Jacobian of the projection. A coordinate sitting
/// exactly on the kink is treated as inactive, i.e. derivative 1.
pub fn jacobian_diag(s: f64, z: &[f64]) -> Vec<f64> {
    z.iter().map(|&zi| if s * zi >= 0.0 { 1.0 } else { 0.0 }).collect()
}
