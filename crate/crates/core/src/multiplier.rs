//! Geometry of the multiplier set `M = H(η̄) ∩ N_K(ȳ)`, where
//! `H(η) = {λ : η + ∇g(x̄)λ = 0}` and `η̄ = ∇f(x̄)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{pseudo_inverse, Matrix, Vector};
use crate::probe::{self, ProbeConfig, RatioStats, Sample};
use crate::problem::{ConicProgram, KktPoint};
use crate::sampling::uniform_shell;

pub use crate::stability::m_isolated_calmness_test;

pub const DYKSTRA_MAX_ITER: usize = 10_000;
pub const DYKSTRA_GAP_TOL: f64 = 1e-11;
pub const MEMBERSHIP_TOL: f64 = 1e-9;
/// Default facial margin demanded of a relative-interior multiplier.
pub const RI_MARGIN: f64 = 1e-6;
const RI_ROUNDS: usize = 50;

/// Cached data describing `M(x̄, 0, 0)`.
#[derive(Clone, Debug)]
pub struct MultiplierSetRef {
    pub point: KktPoint,
    /// `η̄ = ∇f(x̄)`.
    pub eta: Vector,
    /// `g'(x̄)`, `m×n`.
    pub jac: Matrix,
    /// `∇g(x̄) = g'(x̄)ᵀ`.
    pub grad: Matrix,
    grad_pinv: Matrix,
}

impl MultiplierSetRef {
    pub fn new(prog: &ConicProgram, point: &KktPoint) -> Result<Self> {
        let eta = prog.grad_f(&point.x)?;
        let jac = prog.jac_g(&point.x)?;
        let grad = jac.transpose();
        let grad_pinv = pseudo_inverse(&grad, 1e-12);
        let r = MultiplierSetRef { point: point.clone(), eta, jac, grad, grad_pinv };
        let res = r.affine_residual(&point.lambda);
        if res > 1e-8 * (1.0 + point.lambda.norm()) {
            return Err(Error::NotKkt { r1: res, r2: 0.0, tol: 1e-8 });
        }
        Ok(r)
    }

    pub fn affine_residual(&self, lambda: &Vector) -> f64 {
        (&self.eta + &self.grad * lambda).norm()
    }

    /// Least-squares projection onto `H(η̄)`.
    pub fn project_affine(&self, lambda: &Vector) -> Vector {
        lambda - &self.grad_pinv * (&self.grad * lambda + &self.eta)
    }

    pub fn project_normal(&self, lambda: &Vector) -> Result<Vector> {
        self.point.face.project_onto_normal_cone(lambda)
    }

    /// Both membership tests for `M`.
    pub fn contains(&self, lambda: &Vector, tol: f64) -> Result<bool> {
        let s = 1.0 + lambda.norm();
        let n = (lambda - self.project_normal(lambda)?).norm();
        Ok(self.affine_residual(lambda) <= tol * s && n <= tol * s)
    }

    /// Dykstra's alternating projections between `H(η̄)` and `N_K(ȳ)`.
    pub fn project(&self, lambda: &Vector) -> Result<Vector> {
        let m = lambda.len();
        let mut x = lambda.clone();
        let mut p = Vector::zeros(m);
        let mut q = Vector::zeros(m);
        let mut gap = f64::INFINITY;
        for _ in 0..DYKSTRA_MAX_ITER {
            let y = self.project_affine(&(&x + &p));
            p = &x + &p - &y;
            let xn = self.project_normal(&(&y + &q))?;
            q = &y + &q - &xn;
            gap = (&xn - &x).norm();
            x = xn;
            let s = 1.0 + x.norm();
            if gap <= DYKSTRA_GAP_TOL * s && self.affine_residual(&x) <= MEMBERSHIP_TOL * s {
                return Ok(x);
            }
        }
        Err(Error::DykstraNoConvergence { iterations: DYKSTRA_MAX_ITER, gap })
    }
}

/// `dist(λ, M)` and the nearest multiplier.
pub fn dist_to_multiplier_set(mref: &MultiplierSetRef, lambda: &Vector) -> Result<(f64, Vector)> {
    let p = mref.project(lambda)?;
    Ok(((lambda - &p).norm(), p))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RiMultiplier {
    pub lambda: Vec<f64>,
    /// Smallest facial slack inside `N_K(ȳ)`; `null` when the cone is a subspace.
    pub margin: Option<f64>,
}

/// Searches for `λ̂ ∈ M` in the relative interior of `N_K(ȳ)`.
///
/// Starts from the multiplier of least norm, then repeatedly pushes along a
/// fixed relative-interior direction of `N_K(ȳ)` with doubling step and
/// re-projects onto `M`. `None` means the search budget ran out, not that no
/// such multiplier exists.
pub fn find_ri_multiplier(mref: &MultiplierSetRef, ri_margin: f64) -> Result<Option<RiMultiplier>> {
    let face = &mref.point.face;
    let dir = face.ri_direction();
    let mut lambda = mref.project(&Vector::zeros(dir.len()))?;
    let mut step = 1.0;
    for _ in 0..=RI_ROUNDS {
        let margin = face.ri_margin(&lambda)?;
        if margin >= ri_margin && mref.contains(&lambda, MEMBERSHIP_TOL)? {
            return Ok(Some(RiMultiplier {
                lambda: lambda.iter().copied().collect(),
                margin: margin.is_finite().then_some(margin),
            }));
        }
        lambda = mref.project(&(&lambda + &dir * step))?;
        step *= 2.0;
    }
    Ok(None)
}

/// Samples `w` near `ȳ + λ̄`, sets `y = Π_K(w)`, `λ = w − y` and
/// `η = −∇g(x̄)λ` so that `λ` is a multiplier of the perturbed data
/// `(η, y)`, and records `dist(λ, M)/‖(η − η̄, y − ȳ)‖`.
pub fn calmness_probe_m(mref: &MultiplierSetRef, config: &ProbeConfig) -> Result<RatioStats> {
    config.validate()?;
    let cone = mref.point.face.cone().clone();
    let zbar = &mref.point.y + &mref.point.lambda;
    Ok(probe::run(config, |radius, rng| {
        let w = &zbar + uniform_shell(rng, zbar.len(), radius);
        let Ok(y) = cone.project(&w) else { return Sample::Failed };
        let lambda = &w - &y;
        let deta = &mref.grad * (&lambda - &mref.point.lambda);
        let den = (deta.norm_squared() + (&y - &mref.point.y).norm_squared()).sqrt();
        if den < config.tol_den {
            return Sample::Degenerate;
        }
        match dist_to_multiplier_set(mref, &lambda) {
            Ok((d, _)) => Sample::Ratio { value: d / den, point: w.iter().copied().collect() },
            Err(_) => Sample::Failed,
        }
    }))
}

const RESTORE_MAX_ITER: usize = 100;

/// Gauss–Newton restoration of `g(x) ∈ K` with minimum-norm steps.
pub fn restore_feasibility(prog: &ConicProgram, x0: &Vector) -> Result<Option<Vector>> {
    let cone = prog.cone();
    let m = prog.m();
    let mut x = x0.clone();
    let s = prog.g(&x)?;
    let r0 = (&s - cone.project(&s)?).norm();
    let target = (1e-8 * r0).max(1e-15);
    for _ in 0..RESTORE_MAX_ITER {
        let s = prog.g(&x)?;
        let r = &s - cone.project(&s)?;
        if r.norm() <= target {
            return Ok(Some(x));
        }
        let g = cone.projection_jacobian(&s)?;
        let j = (Matrix::identity(m, m) - g) * prog.jac_g(&x)?;
        let step = pseudo_inverse(&j, 1e-12) * r;
        if step.norm() == 0.0 {
            return Ok(None);
        }
        x -= step;
    }
    Ok(None)
}

/// Samples `x` near `x̄` and records `dist(x, g⁻¹(K)) / dist(g(x), K)`,
/// with the numerator estimated by [`restore_feasibility`].
pub fn subregularity_probe(prog: &ConicProgram, xbar: &Vector, config: &ProbeConfig) -> Result<RatioStats> {
    config.validate()?;
    let (_, v) = prog.cone().violation(&prog.g(xbar)?)?;
    if v > 1e-9 {
        return Err(Error::Infeasible { block: 0, violation: v });
    }
    let cone = prog.cone();
    Ok(probe::run(config, |radius, rng| {
        let x = xbar + uniform_shell(rng, xbar.len(), radius);
        let Ok(s) = prog.g(&x) else { return Sample::Failed };
        let Ok(p) = cone.project(&s) else { return Sample::Failed };
        let den = (&s - p).norm();
        if den < config.tol_den {
            return Sample::Degenerate;
        }
        match restore_feasibility(prog, &x) {
            Ok(Some(xr)) => Sample::Ratio { value: (&x - xr).norm() / den, point: x.iter().copied().collect() },
            _ => Sample::Failed,
        }
    }))
}
