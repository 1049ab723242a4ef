//! Positive semidefinite cone on svec coordinates.

use super::svec::{smat, svec};
use crate::linalg::{jacobi_eigen, Matrix, SymEigen, Vector};

pub fn eigen_of(z: &[f64], n: usize) -> Option<SymEigen> {
    jacobi_eigen(&smat(z, n))
}

pub fn project(z: &[f64], n: usize) -> Option<Vector> {
    let e = eigen_of(z, n)?;
    Some(svec(&e.reconstruct_with(|l| l.max(0.0))))
}

pub fn project_polar(z: &[f64], n: usize) -> Option<Vector> {
    let e = eigen_of(z, n)?;
    Some(svec(&e.reconstruct_with(|l| l.min(0.0))))
}

pub fn project_mat(x: &Matrix) -> Option<Matrix> {
    Some(jacobi_eigen(x)?.reconstruct_with(|l| l.max(0.0)))
}

/// First divided differences of `max(·, 0)` used by the Löwner derivative.
/// Ties at zero count as active (derivative 1).
pub fn divided_differences(values: &[f64]) -> Matrix {
    let n = values.len();
    Matrix::from_fn(n, n, |i, j| {
        let (a, b) = (values[i], values[j]);
        if a >= 0.0 && b >= 0.0 {
            1.0
        } else if a < 0.0 && b < 0.0 {
            0.0
        } else {
            (a.max(0.0) - b.max(0.0)) / (a - b)
        }
    })
}

/// Applies the Löwner-formula derivative element of the PSD projection at
/// the matrix with eigendecomposition `e` to the direction `h`.
pub fn lowner_apply(e: &SymEigen, omega: &Matrix, h: &Matrix) -> Matrix {
    let p = &e.vectors;
    let ht = p.transpose() * h * p;
    let inner = omega.component_mul(&ht);
    let out = p * inner * p.transpose();
    crate::linalg::symmetrize(&out)
}

/// Generalized Jacobian of the projection as a matrix acting on svec coordinates.
pub fn jacobian(z: &[f64], n: usize) -> Option<Matrix> {
    let e = eigen_of(z, n)?;
    let omega = divided_differences(&e.values);
    let d = z.len();
    let mut j = Matrix::zeros(d, d);
    for k in 0..d {
        let mut basis = vec![0.0; d];
        basis[k] = 1.0;
        let col = svec(&lowner_apply(&e, &omega, &smat(&basis, n)));
        j.set_column(k, &col);
    }
    Some(j)
}

/// Largest negative eigenvalue magnitude, i.e. distance-like violation.
pub fn violation(z: &[f64], n: usize) -> Option<f64> {
    let e = eigen_of(z, n)?;
    Some(e.values.iter().fold(0.0_f64, |m, v| m.max(-v)))
}
