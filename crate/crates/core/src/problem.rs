//! The canonically perturbed conic program
//!
//! ```text
//! min f(x) − ⟨a, x⟩   s.t.   g(x) − b ∈ K
//! ```
//!
//! together with its Lagrangian derivatives and the natural KKT residual.
//! Quadratic data is the first-class case; any [`Evaluator`] is accepted
//! once it passes [`derivative_selfcheck`].

use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::cone::{FaceDescriptor, ProductCone, DEFAULT_TOL_RANK};
use crate::error::{Error, Result};
use crate::linalg::{Matrix, Vector};
use crate::sampling;

/// `½xᵀAx + bᵀx + d` with `A` symmetric.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadraticFn {
    pub a: Matrix,
    pub b: Vector,
    pub d: f64,
}

impl QuadraticFn {
    /// Rejects nonsquare or asymmetric `A`. Asymmetry up to `1e-12` (relative)
    /// is symmetrized away.
    pub fn new(a: Matrix, b: Vector, d: f64) -> Result<Self> {
        let n = b.len();
        if a.shape() != (n, n) {
            return Err(Error::DimensionMismatch { context: "quadratic matrix", expected: n, got: a.nrows() });
        }
        let asym = (&a - a.transpose()).amax();
        if asym > 1e-12 * (1.0 + a.amax()) {
            return Err(Error::Parse(format!("matrix is not symmetric (max asymmetry {asym:.3e})")));
        }
        let a = crate::linalg::symmetrize(&a);
        Ok(QuadraticFn { a, b, d })
    }

    pub fn n(&self) -> usize {
        self.b.len()
    }

    pub fn value(&self, x: &Vector) -> f64 {
        0.5 * x.dot(&(&self.a * x)) + self.b.dot(x) + self.d
    }

    pub fn gradient(&self, x: &Vector) -> Vector {
        &self.a * x + &self.b
    }
}

/// Vector-valued quadratic map, one [`QuadraticFn`] per output coordinate.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadraticMap {
    pub rows: Vec<QuadraticFn>,
}

/// Values and derivatives of `f` and `g`.
///
/// `jac_g` is `g'(x)` (`m×n`); `hess_g_contract(x, λ)` is `Σᵢ λᵢ ∇²gᵢ(x)`.
pub trait Evaluator: Send + Sync {
    fn n(&self) -> usize;
    fn m(&self) -> usize;
    fn f(&self, x: &Vector) -> f64;
    fn grad_f(&self, x: &Vector) -> Vector;
    fn hess_f(&self, x: &Vector) -> Matrix;
    fn g(&self, x: &Vector) -> Vector;
    fn jac_g(&self, x: &Vector) -> Matrix;
    fn hess_g_contract(&self, x: &Vector, lambda: &Vector) -> Matrix;
}

#[derive(Clone, Debug)]
pub struct QuadraticProgram {
    pub f: QuadraticFn,
    pub g: QuadraticMap,
}

impl Evaluator for QuadraticProgram {
    fn n(&self) -> usize {
        self.f.n()
    }

    fn m(&self) -> usize {
        self.g.rows.len()
    }

    fn f(&self, x: &Vector) -> f64 {
        self.f.value(x)
    }

    fn grad_f(&self, x: &Vector) -> Vector {
        self.f.gradient(x)
    }

    fn hess_f(&self, _x: &Vector) -> Matrix {
        self.f.a.clone()
    }

    fn g(&self, x: &Vector) -> Vector {
        Vector::from_iterator(self.m(), self.g.rows.iter().map(|r| r.value(x)))
    }

    fn jac_g(&self, x: &Vector) -> Matrix {
        let (m, n) = (self.m(), self.n());
        let mut j = Matrix::zeros(m, n);
        for (i, r) in self.g.rows.iter().enumerate() {
            j.set_row(i, &r.gradient(x).transpose());
        }
        j
    }

    fn hess_g_contract(&self, _x: &Vector, lambda: &Vector) -> Matrix {
        let n = self.n();
        self.g.rows.iter().zip(lambda.iter()).fold(Matrix::zeros(n, n), |acc, (r, &l)| acc + &r.a * l)
    }
}

/// A conic program with its cone and evaluator.
#[derive(Clone)]
pub struct ConicProgram {
    cone: ProductCone,
    eval: Arc<dyn Evaluator>,
    quadratic: Option<QuadraticProgram>,
}

impl fmt::Debug for ConicProgram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ConicProgram")
            .field("n", &self.n())
            .field("cone", &self.cone)
            .field("quadratic", &self.quadratic.is_some())
            .finish()
    }
}

/// Relative error threshold for [`derivative_selfcheck`].
pub const SELFCHECK_TOL: f64 = 1e-7;

impl ConicProgram {
    pub fn quadratic(cone: ProductCone, f: QuadraticFn, g: QuadraticMap) -> Result<Self> {
        let n = f.n();
        if g.rows.len() != cone.total_dim() {
            return Err(Error::DimensionMismatch {
                context: "g output vs cone dimension",
                expected: cone.total_dim(),
                got: g.rows.len(),
            });
        }
        for r in &g.rows {
            if r.n() != n {
                return Err(Error::DimensionMismatch { context: "g row variable count", expected: n, got: r.n() });
            }
        }
        let qp = QuadraticProgram { f, g };
        Ok(ConicProgram { cone, eval: Arc::new(qp.clone()), quadratic: Some(qp) })
    }

    /// Wraps an arbitrary evaluator; it must pass [`derivative_selfcheck`]
    /// at a few random points first.
    pub fn from_evaluator(cone: ProductCone, eval: Arc<dyn Evaluator>, seed: u64) -> Result<Self> {
        if eval.m() != cone.total_dim() {
            return Err(Error::DimensionMismatch {
                context: "g output vs cone dimension",
                expected: cone.total_dim(),
                got: eval.m(),
            });
        }
        let prog = ConicProgram { cone, eval, quadratic: None };
        let mut rng = sampling::rng(seed);
        for _ in 0..3 {
            let x = sampling::gaussian_vector(&mut rng, prog.n());
            let rep = derivative_selfcheck(&prog, &x, seed);
            if !rep.passed {
                return Err(Error::SelfCheck { component: rep.worst_component, max_rel_error: rep.max_rel_error });
            }
        }
        Ok(prog)
    }

    pub fn n(&self) -> usize {
        self.eval.n()
    }

    pub fn m(&self) -> usize {
        self.cone.total_dim()
    }

    pub fn cone(&self) -> &ProductCone {
        &self.cone
    }

    pub fn evaluator(&self) -> &dyn Evaluator {
        self.eval.as_ref()
    }

    pub fn as_quadratic(&self) -> Option<&QuadraticProgram> {
        self.quadratic.as_ref()
    }

    fn check_x(&self, x: &Vector) -> Result<()> {
        if x.len() != self.n() {
            return Err(Error::DimensionMismatch { context: "x", expected: self.n(), got: x.len() });
        }
        Ok(())
    }

    fn check_lambda(&self, l: &Vector) -> Result<()> {
        if l.len() != self.m() {
            return Err(Error::DimensionMismatch { context: "lambda", expected: self.m(), got: l.len() });
        }
        Ok(())
    }

    pub fn f(&self, x: &Vector) -> Result<f64> {
        self.check_x(x)?;
        Ok(self.eval.f(x))
    }

    pub fn g(&self, x: &Vector) -> Result<Vector> {
        self.check_x(x)?;
        Ok(self.eval.g(x))
    }

    pub fn grad_f(&self, x: &Vector) -> Result<Vector> {
        self.check_x(x)?;
        Ok(self.eval.grad_f(x))
    }

    /// `g'(x)`, an `m×n` matrix. Its transpose is `∇g(x)`.
    pub fn jac_g(&self, x: &Vector) -> Result<Matrix> {
        self.check_x(x)?;
        Ok(self.eval.jac_g(x))
    }

    /// `∇ₓL(x, λ) = ∇f(x) + ∇g(x)λ`.
    pub fn lagrangian_grad(&self, x: &Vector, lambda: &Vector) -> Result<Vector> {
        self.check_x(x)?;
        self.check_lambda(lambda)?;
        Ok(self.eval.grad_f(x) + self.eval.jac_g(x).transpose() * lambda)
    }

    /// `∇²ₓₓL(x, λ) = ∇²f(x) + Σᵢ λᵢ∇²gᵢ(x)`.
    pub fn lagrangian_hessian(&self, x: &Vector, lambda: &Vector) -> Result<Matrix> {
        self.check_x(x)?;
        self.check_lambda(lambda)?;
        let h = self.eval.hess_f(x) + self.eval.hess_g_contract(x, lambda);
        Ok(crate::linalg::symmetrize(&h))
    }

    /// Natural residual `(∇f + ∇gλ − a, g − b − Π_K(g − b + λ))`.
    pub fn kkt_residual(&self, x: &Vector, lambda: &Vector, a: &Vector, b: &Vector) -> Result<(Vector, Vector)> {
        self.check_lambda(b)?;
        if a.len() != self.n() {
            return Err(Error::DimensionMismatch { context: "a", expected: self.n(), got: a.len() });
        }
        let r1 = self.lagrangian_grad(x, lambda)? - a;
        let s = self.eval.g(x) - b;
        let r2 = &s - self.cone.project(&(&s + lambda))?;
        Ok((r1, r2))
    }

    /// `‖(r1, r2)‖` at the unperturbed system.
    pub fn kkt_residual_norm(&self, x: &Vector, lambda: &Vector) -> Result<f64> {
        let (r1, r2) = self.kkt_residual(x, lambda, &Vector::zeros(self.n()), &Vector::zeros(self.m()))?;
        Ok((r1.norm_squared() + r2.norm_squared()).sqrt())
    }
}

/// A validated KKT pair of the unperturbed program with cached data.
#[derive(Clone, Debug)]
pub struct KktPoint {
    pub x: Vector,
    pub lambda: Vector,
    /// `ȳ = g(x̄)`.
    pub y: Vector,
    pub face: FaceDescriptor,
    pub r1: f64,
    pub r2: f64,
}

impl KktPoint {
    pub fn residual(&self) -> f64 {
        self.r1.hypot(self.r2)
    }
}

/// Default tolerance for [`validate_kkt_point`].
pub const KKT_TOL: f64 = 1e-9;

/// Accepts `(x̄, λ̄)` if the natural residual is below `tol` and `λ̄` is
/// normal to `K` at `g(x̄)`, and attaches the facial data.
pub fn validate_kkt_point(prog: &ConicProgram, x: &Vector, lambda: &Vector, tol: f64) -> Result<KktPoint> {
    let (r1, r2) = prog.kkt_residual(x, lambda, &Vector::zeros(prog.n()), &Vector::zeros(prog.m()))?;
    let (r1, r2) = (r1.norm(), r2.norm());
    if r1.hypot(r2) > tol {
        return Err(Error::NotKkt { r1, r2, tol });
    }
    let y = prog.g(x)?;
    let face = FaceDescriptor::new(prog.cone(), &y, lambda, DEFAULT_TOL_RANK)?;
    Ok(KktPoint { x: x.clone(), lambda: lambda.clone(), y, face, r1, r2 })
}

#[derive(Clone, Debug, Serialize)]
pub struct SelfCheckReport {
    pub passed: bool,
    pub max_rel_error: f64,
    pub worst_component: String,
    pub components: Vec<(String, f64)>,
}

fn rel_err(a: &Matrix, b: &Matrix) -> f64 {
    (a - b).amax() / (1.0 + a.amax().max(b.amax()))
}

fn col(v: Vector) -> Matrix {
    let n = v.len();
    Matrix::from_column_slice(n, 1, v.as_slice())
}

/// Compares analytic gradients, Jacobians and Hessian contractions with
/// central differences, step `ε^{1/3}(1 + |xⱼ|)`.
pub fn derivative_selfcheck(prog: &ConicProgram, x: &Vector, seed: u64) -> SelfCheckReport {
    let e = prog.evaluator();
    let (n, m) = (e.n(), e.m());
    let mut rng = sampling::rng(seed);
    let lambda = sampling::gaussian_vector(&mut rng, m);
    let eps = f64::EPSILON.cbrt();

    let mut fd_grad = Vector::zeros(n);
    let mut fd_jac = Matrix::zeros(m, n);
    let mut fd_hf = Matrix::zeros(n, n);
    let mut fd_hg = Matrix::zeros(n, n);
    for j in 0..n {
        let h = eps * (1.0 + x[j].abs());
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[j] += h;
        xm[j] -= h;
        fd_grad[j] = (e.f(&xp) - e.f(&xm)) / (2.0 * h);
        fd_jac.set_column(j, &((e.g(&xp) - e.g(&xm)) / (2.0 * h)));
        fd_hf.set_column(j, &((e.grad_f(&xp) - e.grad_f(&xm)) / (2.0 * h)));
        let dg = (e.jac_g(&xp) - e.jac_g(&xm)).transpose() * &lambda / (2.0 * h);
        fd_hg.set_column(j, &dg);
    }
    let components = vec![
        ("grad_f".to_string(), rel_err(&col(e.grad_f(x)), &col(fd_grad))),
        ("jac_g".to_string(), rel_err(&e.jac_g(x), &fd_jac)),
        ("hess_f".to_string(), rel_err(&e.hess_f(x), &fd_hf)),
        ("hess_g".to_string(), rel_err(&e.hess_g_contract(x, &lambda), &fd_hg)),
    ];
    let (worst_component, max_rel_error) =
        components.iter().cloned().max_by(|a, b| a.1.total_cmp(&b.1)).expect("four components");
    SelfCheckReport { passed: max_rel_error <= SELFCHECK_TOL, max_rel_error, worst_component, components }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cone::ConeBlock;

    fn scalar(a: f64, b: f64, d: f64) -> QuadraticFn {
        QuadraticFn::new(Matrix::from_element(1, 1, a), Vector::from_element(1, b), d).unwrap()
    }

    fn p1() -> ConicProgram {
        let k = ProductCone::single(ConeBlock::Zero { dim: 1 });
        ConicProgram::quadratic(k, scalar(1.0, 0.0, 0.0), QuadraticMap { rows: vec![scalar(2.0, 0.0, 0.0)] }).unwrap()
    }

    fn v(x: f64) -> Vector {
        Vector::from_element(1, x)
    }

    #[test]
    fn hessian_is_affine_in_lambda() {
        let p = p1();
        assert_eq!(p.lagrangian_hessian(&v(0.0), &v(-0.5)).unwrap()[(0, 0)], 0.0);
        assert_eq!(p.lagrangian_hessian(&v(0.0), &v(1.0)).unwrap()[(0, 0)], 3.0);
    }

    #[test]
    fn residual_by_hand() {
        let p = p1();
        let (r1, r2) = p.kkt_residual(&v(1.0), &v(0.0), &v(0.0), &v(0.0)).unwrap();
        assert_eq!((r1[0], r2[0]), (1.0, 1.0));
    }

    #[test]
    fn rejects_off_manifold_point() {
        match validate_kkt_point(&p1(), &v(0.1), &v(-0.5), 1e-9) {
            Err(Error::NotKkt { r2, .. }) => assert!((r2 - 0.01).abs() < 1e-15),
            other => panic!("unexpected {other:?}"),
        }
        assert!(validate_kkt_point(&p1(), &v(0.0), &v(-0.5), 1e-9).is_ok());
    }

    #[test]
    fn asymmetric_rejected() {
        let a = Matrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0]);
        assert!(QuadraticFn::new(a, Vector::zeros(2), 0.0).is_err());
        let a = Matrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0 + 1e-14, 1.0]);
        assert!(QuadraticFn::new(a, Vector::zeros(2), 0.0).is_ok());
    }

    struct WrongSign(QuadraticProgram);

    impl Evaluator for WrongSign {
        fn n(&self) -> usize {
            self.0.n()
        }
        fn m(&self) -> usize {
            self.0.m()
        }
        fn f(&self, x: &Vector) -> f64 {
            self.0.f(x)
        }
        fn grad_f(&self, x: &Vector) -> Vector {
            self.0.grad_f(x)
        }
        fn hess_f(&self, x: &Vector) -> Matrix {
            self.0.hess_f(x)
        }
        fn g(&self, x: &Vector) -> Vector {
            self.0.g(x)
        }
        fn jac_g(&self, x: &Vector) -> Matrix {
            -self.0.jac_g(x)
        }
        fn hess_g_contract(&self, x: &Vector, l: &Vector) -> Matrix {
            self.0.hess_g_contract(x, l)
        }
    }

    #[test]
    fn selfcheck_catches_wrong_jacobian_sign() {
        let p = p1();
        assert!(derivative_selfcheck(&p, &v(0.3), 1).passed);
        let bad = Arc::new(WrongSign(p.as_quadratic().unwrap().clone()));
        let res = ConicProgram::from_evaluator(p.cone().clone(), bad, 1);
        assert!(matches!(res, Err(Error::SelfCheck { .. })));
    }
}
