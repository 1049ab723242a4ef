//! Small dense linear-algebra helpers shared by the cone and solver code.

use nalgebra::{DMatrix, DVector};

pub type Vector = DVector<f64>;
pub type Matrix = DMatrix<f64>;

/// Convergence tolerance on the off-diagonal mass, relative to the Frobenius norm.
pub const JACOBI_TOL: f64 = 1e-12;
pub const JACOBI_MAX_SWEEPS: usize = 100;

/// Eigendecomposition `A = V diag(values) Vᵀ` of a symmetric matrix.
///
/// Eigenvalues are sorted in descending order and the columns of `vectors`
/// follow the same order.
#[derive(Clone, Debug)]
pub struct SymEigen {
    pub values: Vec<f64>,
    pub vectors: Matrix,
}

impl SymEigen {
    pub fn reconstruct_with(&self, f: impl Fn(f64) -> f64) -> Matrix {
        let n = self.values.len();
        let mut out = Matrix::zeros(n, n);
        for (k, &lam) in self.values.iter().enumerate() {
            let s = f(lam);
            if s == 0.0 {
                continue;
            }
            let v = self.vectors.column(k);
            out += s * v * v.transpose();
        }
        symmetrize(&out)
    }

    pub fn spectral_scale(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }
}

/// Cyclic Jacobi eigenvalue iteration for a small symmetric matrix.
///
/// Returns `None` if the off-diagonal mass is still above tolerance after
/// [`JACOBI_MAX_SWEEPS`] sweeps. Only the lower triangle of `a` is read.
pub fn jacobi_eigen(a: &Matrix) -> Option<SymEigen> {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "jacobi_eigen needs a square matrix");
    let mut m = symmetrize_lower(a);
    let mut v = Matrix::identity(n, n);
    let scale = m.norm();
    let mut converged = n <= 1 || scale == 0.0;

    for _ in 0..JACOBI_MAX_SWEEPS {
        if converged {
            break;
        }
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .filter(|(i, j)| i != j)
            .map(|(i, j)| m[(i, j)] * m[(i, j)])
            .sum::<f64>()
            .sqrt();
        if off <= JACOBI_TOL * scale {
            converged = true;
            break;
        }
        for p in 0..n - 1 {
            for q in p + 1..n {
                let apq = m[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let app = m[(p, p)];
                let aqq = m[(q, q)];
                // Rotation angle from the 2x2 symmetric Schur decomposition.
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;

                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
                m[(p, q)] = 0.0;
                m[(q, p)] = 0.0;
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    if !converged {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .filter(|(i, j)| i != j)
            .map(|(i, j)| m[(i, j)] * m[(i, j)])
            .sum::<f64>()
            .sqrt();
        if off > JACOBI_TOL * scale {
            return None;
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[(j, j)].total_cmp(&m[(i, i)]));
    let values = order.iter().map(|&i| m[(i, i)]).collect();
    let vectors = Matrix::from_fn(n, n, |r, c| v[(r, order[c])]);
    Some(SymEigen { values, vectors })
}

pub fn symmetrize(a: &Matrix) -> Matrix {
    (a + a.transpose()) * 0.5
}

fn symmetrize_lower(a: &Matrix) -> Matrix {
    let n = a.nrows();
    Matrix::from_fn(n, n, |i, j| if i >= j { a[(i, j)] } else { a[(j, i)] })
}

/// Moore-Penrose pseudo-inverse with singular values below
/// `rtol * max(σ)` treated as zero.
pub fn pseudo_inverse(a: &Matrix, rtol: f64) -> Matrix {
    let (r, c) = a.shape();
    if r == 0 || c == 0 {
        return Matrix::zeros(c, r);
    }
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.iter().fold(0.0_f64, |m, s| m.max(*s));
    if smax == 0.0 {
        return Matrix::zeros(c, r);
    }
    let eps = rtol * smax;
    svd.pseudo_inverse(eps).unwrap_or_else(|_| Matrix::zeros(c, r))
}

/// Orthonormal basis of the null space of `a` (columns), using an SVD rank cut.
pub fn null_space(a: &Matrix, rtol: f64) -> Matrix {
    let (r, c) = a.shape();
    if c == 0 {
        return Matrix::zeros(0, 0);
    }
    if r == 0 {
        return Matrix::identity(c, c);
    }
    // Pad to at least square so the SVD returns a full right basis.
    let padded = if r < c {
        let mut p = Matrix::zeros(c, c);
        p.view_mut((0, 0), (r, c)).copy_from(a);
        p
    } else {
        a.clone()
    };
    let svd = padded.svd(false, true);
    let vt = svd.v_t.expect("requested V^T");
    let smax = svd.singular_values.iter().fold(0.0_f64, |m, s| m.max(*s));
    let cut = rtol * smax.max(f64::MIN_POSITIVE);
    let cols: Vec<Vector> = svd
        .singular_values
        .iter()
        .enumerate()
        .filter(|(_, s)| smax == 0.0 || **s <= cut)
        .map(|(k, _)| vt.row(k).transpose())
        .collect();
    if cols.is_empty() {
        Matrix::zeros(c, 0)
    } else {
        Matrix::from_columns(&cols)
    }
}

/// Solve `(AᵀA + μI) x = Aᵀb`, falling back to the pseudo-inverse when the
/// Cholesky factorization fails.
pub fn damped_least_squares(a: &Matrix, b: &Vector, mu: f64) -> Vector {
    let n = a.ncols();
    let ata = a.transpose() * a + Matrix::identity(n, n) * mu;
    let atb = a.transpose() * b;
    match ata.clone().cholesky() {
        Some(ch) => ch.solve(&atb),
        None => pseudo_inverse(&ata, 1e-14) * atb,
    }
}

pub fn concat(a: &Vector, b: &Vector) -> Vector {
    Vector::from_iterator(a.len() + b.len(), a.iter().chain(b.iter()).copied())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reconstruct(e: &SymEigen) -> Matrix {
        e.reconstruct_with(|x| x)
    }

    #[test]
    fn jacobi_diagonalizes_known_matrix() {
        let a = Matrix::from_row_slice(3, 3, &[2.0, -1.0, 0.0, -1.0, 2.0, -1.0, 0.0, -1.0, 2.0]);
        let e = jacobi_eigen(&a).unwrap();
        let s2 = 2f64.sqrt();
        let expected = [2.0 + s2, 2.0, 2.0 - s2];
        for (got, want) in e.values.iter().zip(expected) {
            assert!((got - want).abs() < 1e-12, "{got} vs {want}");
        }
        assert!((reconstruct(&e) - &a).norm() < 1e-12);
        let vtv = e.vectors.transpose() * &e.vectors;
        assert!((vtv - Matrix::identity(3, 3)).norm() < 1e-10);
    }

    #[test]
    fn jacobi_handles_repeated_and_zero() {
        let a = Matrix::zeros(4, 4);
        let e = jacobi_eigen(&a).unwrap();
        assert!(e.values.iter().all(|v| *v == 0.0));
        let b = Matrix::identity(3, 3) * 5.0;
        let e = jacobi_eigen(&b).unwrap();
        assert!(e.values.iter().all(|v| (*v - 5.0).abs() < 1e-15));
    }

    #[test]
    fn jacobi_random_8x8() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let b = Matrix::from_fn(8, 8, |_, _| rng.gen_range(-1.0..1.0));
            let a = symmetrize(&b);
            let e = jacobi_eigen(&a).unwrap();
            assert!((reconstruct(&e) - &a).norm() < 1e-11);
            let vtv = e.vectors.transpose() * &e.vectors;
            assert!((vtv - Matrix::identity(8, 8)).norm() < 1e-10);
            assert!(e.values.windows(2).all(|w| w[0] >= w[1]));
        }
    }

    #[test]
    fn null_space_of_rank_deficient() {
        let a = Matrix::from_row_slice(1, 3, &[1.0, 0.0, -1.0]);
        let ns = null_space(&a, 1e-12);
        assert_eq!(ns.ncols(), 2);
        assert!((&a * &ns).norm() < 1e-12);
        let z = Matrix::zeros(1, 2);
        assert_eq!(null_space(&z, 1e-12).ncols(), 2);
    }

    #[test]
    fn pinv_of_zero_is_zero() {
        let z = Matrix::zeros(1, 1);
        assert_eq!(pseudo_inverse(&z, 1e-12)[(0, 0)], 0.0);
    }
}
