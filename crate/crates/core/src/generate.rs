//! Random small programs with a known KKT point, for tests and benchmarks.

use rand::Rng;

use crate::cone::{ConeBlock, ProductCone, Sign};
use crate::error::Result;
use crate::linalg::{Matrix, Vector};
use crate::problem::{validate_kkt_point, ConicProgram, KktPoint, QuadraticFn, QuadraticMap, KKT_TOL};
use crate::sampling::rng;

fn small_int<R: Rng + ?Sized>(rng: &mut R, k: i32) -> f64 {
    rng.gen_range(-k..=k) as f64
}

/// A program over a product of zero and orthant blocks with `n ≤ 4`,
/// `m ≤ 4` and integer data, together with a KKT point at `x̄ = 0`.
///
/// The point is built from `z = ȳ + λ̄` with entries in `{−2, …, 2}`, so
/// strict, degenerate and inactive orthant coordinates all occur. `H` is
/// rank deficient about half of the time and `g` is quadratic about a
/// quarter of the time.
pub fn polyhedral_instance(seed: u64) -> Result<(ConicProgram, KktPoint)> {
    let mut rng = rng(seed);
    let n = rng.gen_range(1..=4);
    let mut blocks = Vec::new();
    let mut m = 0;
    while m == 0 || (m < 4 && rng.gen_bool(0.5)) {
        let room = 4 - m;
        let dim = rng.gen_range(1..=room.min(3));
        let block = if rng.gen_bool(0.25) {
            ConeBlock::Zero { dim }
        } else {
            let sign = if rng.gen_bool(0.5) { Sign::NonPos } else { Sign::NonNeg };
            ConeBlock::Orthant { dim, sign }
        };
        m += dim;
        blocks.push(block);
    }
    let cone = ProductCone::new(blocks)?;
    let z = Vector::from_fn(m, |_, _| small_int(&mut rng, 2));
    let ybar = cone.project(&z)?;
    let lbar = &z - &ybar;

    let jac = Matrix::from_fn(m, n, |_, _| small_int(&mut rng, 2));
    let hess = if rng.gen_bool(0.5) {
        let k = rng.gen_range(0..n);
        let b = Matrix::from_fn(n, k, |_, _| small_int(&mut rng, 2));
        &b * b.transpose()
    } else {
        let a = Matrix::from_fn(n, n, |_, _| small_int(&mut rng, 2));
        &a + a.transpose()
    };
    let quadratic = rng.gen_bool(0.25);
    let rows: Vec<QuadraticFn> = (0..m)
        .map(|i| {
            let a = if quadratic {
                let a = Matrix::from_fn(n, n, |_, _| small_int(&mut rng, 1));
                &a + a.transpose()
            } else {
                Matrix::zeros(n, n)
            };
            QuadraticFn::new(a, jac.row(i).transpose(), ybar[i])
        })
        .collect::<Result<_>>()?;
    let c = -(jac.transpose() * &lbar);
    let f = QuadraticFn::new(hess, c, 0.0)?;
    let prog = ConicProgram::quadratic(cone, f, QuadraticMap { rows })?;
    let point = validate_kkt_point(&prog, &Vector::zeros(n), &lbar, KKT_TOL)?;
    Ok((prog, point))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn instances_are_valid_and_varied() {
        let mut degenerate = 0;
        for seed in 0..100 {
            let (prog, point) = polyhedral_instance(seed).unwrap();
            assert!(prog.cone().is_polyhedral());
            assert!(point.residual() <= KKT_TOL);
            let y = &point.y;
            degenerate += y.iter().zip(point.lambda.iter()).filter(|(a, b)| **a == 0.0 && **b == 0.0).count();
        }
        assert!(degenerate > 20);
    }
}
