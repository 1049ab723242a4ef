//! Scaled symmetric vectorization.
//!
//! An `n×n` symmetric matrix is stored as its lower triangle in column-major
//! order, with every off-diagonal entry multiplied by `√2`:
//!
//! ```text
//! svec(X) = (X₁₁, √2·X₂₁, …, √2·Xₙ₁, X₂₂, √2·X₃₂, …, Xₙₙ)
//! ```
//!
//! With this scaling `⟨svec(X), svec(Y)⟩ = tr(XY)`.

use crate::linalg::{Matrix, Vector};

pub fn svec_len(n: usize) -> usize {
    n * (n + 1) / 2
}

/// Inverse of [`svec_len`]; `None` if `len` is not a triangular number.
pub fn order_from_len(len: usize) -> Option<usize> {
    let n = ((((8 * len + 1) as f64).sqrt() - 1.0) / 2.0).round() as usize;
    (svec_len(n) == len).then_some(n)
}

pub fn svec(x: &Matrix) -> Vector {
    let n = x.nrows();
    let mut out = Vec::with_capacity(svec_len(n));
    for j in 0..n {
        for i in j..n {
            if i == j {
                out.push(x[(i, i)]);
            } else {
                out.push(std::f64::consts::SQRT_2 * 0.5 * (x[(i, j)] + x[(j, i)]));
            }
        }
    }
    Vector::from_vec(out)
}

pub fn smat(v: &[f64], n: usize) -> Matrix {
    debug_assert_eq!(v.len(), svec_len(n));
    let mut x = Matrix::zeros(n, n);
    let mut k = 0;
    for j in 0..n {
        for i in j..n {
            if i == j {
                x[(i, i)] = v[k];
            } else {
                let e = v[k] * std::f64::consts::FRAC_1_SQRT_2;
                x[(i, j)] = e;
                x[(j, i)] = e;
            }
            k += 1;
        }
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_is_column_major_lower() {
        let x = Matrix::from_row_slice(3, 3, &[1.0, 2.0, 3.0, 2.0, 4.0, 5.0, 3.0, 5.0, 6.0]);
        let s2 = std::f64::consts::SQRT_2;
        let v = svec(&x);
        let want = [1.0, 2.0 * s2, 3.0 * s2, 4.0, 5.0 * s2, 6.0];
        for (a, b) in v.iter().zip(want) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!((smat(v.as_slice(), 3) - x).norm() < 1e-14);
    }

    #[test]
    fn inner_product_is_trace() {
        let x = Matrix::from_row_slice(2, 2, &[1.0, -2.0, -2.0, 3.0]);
        let y = Matrix::from_row_slice(2, 2, &[0.5, 4.0, 4.0, -1.0]);
        let tr = (&x * &y).trace();
        assert!((svec(&x).dot(&svec(&y)) - tr).abs() < 1e-13);
    }

    #[test]
    fn triangular_lengths() {
        assert_eq!(order_from_len(1), Some(1));
        assert_eq!(order_from_len(3), Some(2));
        assert_eq!(order_from_len(10), Some(4));
        assert_eq!(order_from_len(4), None);
    }
}
