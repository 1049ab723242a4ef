//! Random points for property tests, probes and benchmarks.
//!
//! "Structured" points deliberately land on lower-dimensional faces (zero
//! coordinates, cone boundaries, repeated zero eigenvalues) where the
//! projection is nonsmooth.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::cone::svec::{svec, svec_len};
use crate::cone::{ConeBlock, ProductCone};
use crate::linalg::{Matrix, Vector};

/// Seeded generator used throughout the crate.
pub type SampleRng = ChaCha8Rng;

pub fn rng(seed: u64) -> SampleRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent stream `index` derived from `seed`; used so that parallel
/// sampling is reproducible regardless of scheduling.
pub fn derived_rng(seed: u64, index: u64) -> SampleRng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(index);
    r
}

pub fn gaussian<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

pub fn gaussian_vector<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vector {
    Vector::from_fn(n, |_, _| gaussian(rng))
}

/// Uniform point in the closed ball of radius `r`.
pub fn uniform_ball<R: Rng + ?Sized>(rng: &mut R, n: usize, r: f64) -> Vector {
    let g = gaussian_vector(rng, n);
    let norm = g.norm();
    if n == 0 || norm == 0.0 {
        return Vector::zeros(n);
    }
    let rad = r * rng.gen::<f64>().powf(1.0 / n as f64);
    g * (rad / norm)
}

/// Uniform point in the shell `r/2 ≤ ‖x‖ ≤ r`.
pub fn uniform_shell<R: Rng + ?Sized>(rng: &mut R, n: usize, r: f64) -> Vector {
    let g = gaussian_vector(rng, n);
    let norm = g.norm();
    if n == 0 || norm == 0.0 {
        return Vector::zeros(n);
    }
    let nf = n as f64;
    let lo = (0.5 * r).powf(nf);
    let rad = (lo + rng.gen::<f64>() * (r.powf(nf) - lo)).powf(1.0 / nf);
    g * (rad / norm)
}

pub fn random_orthogonal<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Matrix {
    let g = DMatrix::from_fn(n, n, |_, _| gaussian(rng));
    g.qr().q()
}

/// A block of the given kind name with random dimension up to `max_dim`
/// (order for PSD).
pub fn random_block<R: Rng + ?Sized>(rng: &mut R, kind: &str, max_dim: usize) -> ConeBlock {
    let d = rng.gen_range(1..=max_dim.max(1));
    match kind {
        "zero" => ConeBlock::Zero { dim: d },
        "orthant_nonneg" => ConeBlock::Orthant { dim: d, sign: crate::cone::Sign::NonNeg },
        "orthant_nonpos" => ConeBlock::Orthant { dim: d, sign: crate::cone::Sign::NonPos },
        "soc" => ConeBlock::SecondOrder { dim: d },
        "psd" => ConeBlock::Psd { order: d },
        other => panic!("unknown block kind {other}"),
    }
}

/// A point of the block's ambient space, generic with probability ½ and
/// otherwise placed on a nonsmooth locus of the projection.
pub fn structured_point<R: Rng + ?Sized>(rng: &mut R, block: &ConeBlock) -> Vector {
    let generic = rng.gen_bool(0.5);
    match *block {
        ConeBlock::Zero { dim } => gaussian_vector(rng, dim),
        ConeBlock::Orthant { dim, .. } => Vector::from_fn(dim, |_, _| {
            if generic || rng.gen_bool(0.5) {
                gaussian(rng)
            } else {
                0.0
            }
        }),
        ConeBlock::SecondOrder { dim } => {
            let mut z = gaussian_vector(rng, dim);
            if generic {
                return z;
            }
            let nu = z.rows(1, dim - 1).norm();
            match rng.gen_range(0..4) {
                0 => z[0] = nu,
                1 => z[0] = -nu,
                2 => z.fill(0.0),
                _ => {
                    z.rows_mut(1, dim - 1).fill(0.0);
                }
            }
            z
        }
        ConeBlock::Psd { order } => {
            let p = random_orthogonal(rng, order);
            let d = Vector::from_fn(order, |_, _| {
                if generic || rng.gen_bool(0.5) {
                    gaussian(rng)
                } else {
                    0.0
                }
            });
            svec(&(&p * Matrix::from_diagonal(&d) * p.transpose()))
        }
    }
}

pub fn structured_product_point<R: Rng + ?Sized>(rng: &mut R, cone: &ProductCone) -> Vector {
    let mut out = Vector::zeros(cone.total_dim());
    for (_, b, r) in cone.iter() {
        out.rows_mut(r.start, r.len()).copy_from(&structured_point(rng, b));
    }
    out
}

/// Random symmetric matrix entries, flattened as svec.
pub fn random_svec<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vector {
    gaussian_vector(rng, svec_len(n))
}
