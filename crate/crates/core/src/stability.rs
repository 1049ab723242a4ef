//! Verdict engines for noncriticality, isolated calmness, second-order
//! sufficiency and the Σ∩Γ sign condition, plus the sufficient-condition
//! ladder for strong calmness.
//!
//! The homogeneous systems all have the shape
//!
//! ```text
//! R(u) = L·u − (0, Π'_K(ȳ+λ̄; P·u))
//! ```
//!
//! for a mode-dependent linear part `L` and selector `P`, and the question
//! is whether a solution exists with a designated component nonzero.

use std::ops::Range;

use minilp::{ComparisonOp, OptimizationDirection, Problem};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cone::{BlockFace, FaceDescriptor, OrthantClass};
use crate::error::{Error, Result};
use crate::linalg::{null_space, pseudo_inverse, Matrix, Vector};
use crate::multiplier::{find_ri_multiplier, subregularity_probe, MultiplierSetRef, RI_MARGIN};
use crate::probe::{Growth, ProbeConfig, RatioStats};
use crate::problem::{ConicProgram, KktPoint};
use crate::sampling::{derived_rng, gaussian_vector, uniform_ball};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Unknowns `(ξ, v)`; asks for `ξ ≠ 0`.
    Noncritical,
    /// Unknown `ξ` with `v ≡ 0`.
    XIsolated,
    /// Unknowns `(ξ, v)`; asks for `(ξ, v) ≠ 0`.
    SkktIsolated,
    /// Unknown `v` with `ξ ≡ 0`.
    MIsolated,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Face enumeration when the cone is polyhedral, multistart otherwise.
    Auto,
    FaceEnum,
    Multistart,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityConfig {
    pub method: Method,
    pub seed: u64,
    pub starts: usize,
    /// Witness residual tolerance; `(tol, 10·tol]` is the inconclusive band.
    pub tol: f64,
    pub sosc_margin: f64,
    pub sign_samples: usize,
}

impl Default for StabilityConfig {
    fn default() -> Self {
        StabilityConfig { method: Method::Auto, seed: 0, starts: 64, tol: 1e-8, sosc_margin: 1e-8, sign_samples: 2000 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Holds,
    Fails,
    Inconclusive,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub xi: Vec<f64>,
    pub v: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MethodTag {
    FaceEnum,
    Multistart,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityVerdict {
    pub mode: Mode,
    pub status: Status,
    pub witness: Option<Witness>,
    /// Witness residual for `Fails`, best residual over starts for multistart.
    pub residual: Option<f64>,
    pub method: MethodTag,
    /// `true` for face enumeration, where `Holds` is a proof.
    pub exact: bool,
    pub seed: Option<u64>,
}

/// The homogeneous system for one mode at a KKT point.
#[derive(Clone, Debug)]
pub struct HomogeneousSystem {
    mode: Mode,
    n: usize,
    m: usize,
    lin: Matrix,
    select: Matrix,
    face: FaceDescriptor,
    constrained: Range<usize>,
    free: Range<usize>,
}

impl HomogeneousSystem {
    /// `hess = ∇²ₓₓL(x̄, λ̄)`, `jac = g'(x̄)`, `face` at `(ȳ, λ̄)`.
    pub fn new(hess: &Matrix, jac: &Matrix, face: &FaceDescriptor, mode: Mode) -> Self {
        let (m, n) = jac.shape();
        let jt = jac.transpose();
        let (lin, select, constrained, free) = match mode {
            Mode::Noncritical | Mode::SkktIsolated => {
                let mut lin = Matrix::zeros(n + m, n + m);
                lin.view_mut((0, 0), (n, n)).copy_from(hess);
                lin.view_mut((0, n), (n, m)).copy_from(&jt);
                lin.view_mut((n, 0), (m, n)).copy_from(jac);
                let mut sel = Matrix::zeros(m, n + m);
                sel.view_mut((0, 0), (m, n)).copy_from(jac);
                sel.view_mut((0, n), (m, m)).fill_with_identity();
                if mode == Mode::Noncritical {
                    (lin, sel, 0..n, n..n + m)
                } else {
                    (lin, sel, 0..n + m, n + m..n + m)
                }
            }
            Mode::XIsolated => {
                let mut lin = Matrix::zeros(n + m, n);
                lin.view_mut((0, 0), (n, n)).copy_from(hess);
                lin.view_mut((n, 0), (m, n)).copy_from(jac);
                (lin, jac.clone(), 0..n, n..n)
            }
            Mode::MIsolated => {
                let mut lin = Matrix::zeros(n + m, m);
                lin.view_mut((0, 0), (n, m)).copy_from(&jt);
                (lin, Matrix::identity(m, m), 0..m, m..m)
            }
        };
        HomogeneousSystem { mode, n, m, lin, select, face: face.clone(), constrained, free }
    }

    pub fn from_point(prog: &ConicProgram, point: &KktPoint, mode: Mode) -> Result<Self> {
        let hess = prog.lagrangian_hessian(&point.x, &point.lambda)?;
        let jac = prog.jac_g(&point.x)?;
        Ok(Self::new(&hess, &jac, &point.face, mode))
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn unknowns(&self) -> usize {
        self.lin.ncols()
    }

    pub fn residual(&self, u: &Vector) -> Result<Vector> {
        let mut r = &self.lin * u;
        let pd = self.face.proj_dirderiv(&(&self.select * u))?;
        let mut tail = r.rows_mut(self.n, self.m);
        tail -= pd;
        Ok(r)
    }

    fn residual_jacobian(&self, u: &Vector) -> Result<Matrix> {
        let jp = self.face.dirderiv_jacobian(&(&self.select * u))?;
        let mut j = self.lin.clone();
        let mut tail = j.rows_mut(self.n, self.m);
        tail -= jp * &self.select;
        Ok(j)
    }

    pub fn witness(&self, u: &Vector) -> Witness {
        let (n, m) = (self.n, self.m);
        let take = |r: Range<usize>| u.rows(r.start, r.len()).iter().copied().collect::<Vec<_>>();
        match self.mode {
            Mode::Noncritical | Mode::SkktIsolated => Witness { xi: take(0..n), v: take(n..n + m) },
            Mode::XIsolated => Witness { xi: take(0..n), v: vec![0.0; m] },
            Mode::MIsolated => Witness { xi: vec![0.0; n], v: take(0..m) },
        }
    }

    fn constrained_norm(&self, u: &Vector) -> f64 {
        u.rows(self.constrained.start, self.constrained.len()).norm()
    }

    /// Rescales `u` to unit constrained norm and returns the residual there.
    pub fn normalized_residual(&self, u: &Vector) -> Result<Option<(Vector, f64)>> {
        let s = self.constrained_norm(u);
        if !(s > 1e-12) {
            return Ok(None);
        }
        let u = u / s;
        let r = self.residual(&u)?.norm();
        Ok(Some((u, r)))
    }

    fn fails(&self, u: &Vector, residual: f64, method: MethodTag, seed: Option<u64>) -> StabilityVerdict {
        StabilityVerdict {
            mode: self.mode,
            status: Status::Fails,
            witness: Some(self.witness(u)),
            residual: Some(residual),
            method,
            exact: method == MethodTag::FaceEnum,
            seed,
        }
    }
}

/// Decides whether the system has a solution with nonzero constrained part.
pub fn decide(sys: &HomogeneousSystem, cfg: &StabilityConfig) -> Result<StabilityVerdict> {
    let polyhedral = sys.face.cone().is_polyhedral();
    match cfg.method {
        Method::FaceEnum => face_enum(sys, cfg),
        Method::Auto if polyhedral => face_enum(sys, cfg),
        _ => multistart(sys, cfg),
    }
}

const LP_ZERO: f64 = 1e-9;
const MAX_DEGENERATE: usize = 16;

enum Coef {
    Fixed(f64),
    Degenerate(f64),
}

fn polyhedral_coefficients(face: &FaceDescriptor) -> Result<Vec<Coef>> {
    let mut out = Vec::new();
    for (i, f) in face.faces().iter().enumerate() {
        match f {
            BlockFace::Zero => {
                out.extend((0..face.cone().blocks()[i].dim()).map(|_| Coef::Fixed(0.0)));
            }
            BlockFace::Orthant { sign, classes } => out.extend(classes.iter().map(|c| match c {
                OrthantClass::Strict => Coef::Fixed(0.0),
                OrthantClass::Inactive => Coef::Fixed(1.0),
                OrthantClass::Degenerate => Coef::Degenerate(*sign),
            })),
            _ => return Err(Error::NotPolyhedral { block: i, kind: face.cone().blocks()[i].kind_name() }),
        }
    }
    Ok(out)
}

/// One linear piece of `Π'`: `Π'(h)ᵢ = cᵢhᵢ` under sign constraints on the
/// degenerate coordinates.
struct Piece {
    matrix: Matrix,
    signs: Vec<(usize, f64)>,
}

fn lp_extreme(sys: &HomogeneousSystem, piece: &Piece, objective: &[(usize, f64)]) -> Option<(f64, Vector)> {
    let nu = sys.unknowns();
    let mut lp = Problem::new(OptimizationDirection::Maximize);
    let mut obj = vec![0.0; nu];
    for &(k, c) in objective {
        obj[k] = c;
    }
    let vars: Vec<_> = (0..nu).map(|j| lp.add_var(obj[j], (-1.0, 1.0))).collect();
    for row in piece.matrix.row_iter() {
        let terms: Vec<_> = vars.iter().zip(row.iter()).filter(|(_, c)| **c != 0.0).map(|(v, c)| (*v, *c)).collect();
        if !terms.is_empty() {
            lp.add_constraint(terms, ComparisonOp::Eq, 0.0);
        }
    }
    for &(i, s) in &piece.signs {
        let row = sys.select.row(i);
        let terms: Vec<_> =
            vars.iter().zip(row.iter()).filter(|(_, c)| **c != 0.0).map(|(v, c)| (*v, s * *c)).collect();
        if !terms.is_empty() {
            lp.add_constraint(terms, ComparisonOp::Ge, 0.0);
        }
    }
    let sol = lp.solve().ok()?;
    let u = Vector::from_iterator(nu, vars.iter().map(|v| sol[*v]));
    Some((sol.objective(), u))
}

/// Among solutions of the piece with `u_k = value`, one with least `ℓ₁` norm
/// on the unconstrained part.
fn lp_polish(sys: &HomogeneousSystem, piece: &Piece, k: usize, value: f64) -> Option<Vector> {
    if sys.free.is_empty() {
        return None;
    }
    let nu = sys.unknowns();
    let mut lp = Problem::new(OptimizationDirection::Minimize);
    let vars: Vec<_> = (0..nu).map(|_| lp.add_var(0.0, (-1.0, 1.0))).collect();
    for j in sys.free.clone() {
        let t = lp.add_var(1.0, (0.0, 1.0));
        lp.add_constraint([(vars[j], 1.0), (t, -1.0)], ComparisonOp::Le, 0.0);
        lp.add_constraint([(vars[j], -1.0), (t, -1.0)], ComparisonOp::Le, 0.0);
    }
    lp.add_constraint([(vars[k], 1.0)], ComparisonOp::Eq, value);
    for row in piece.matrix.row_iter() {
        let terms: Vec<_> = vars.iter().zip(row.iter()).filter(|(_, c)| **c != 0.0).map(|(v, c)| (*v, *c)).collect();
        if !terms.is_empty() {
            lp.add_constraint(terms, ComparisonOp::Eq, 0.0);
        }
    }
    for &(i, s) in &piece.signs {
        let terms: Vec<_> = vars
            .iter()
            .zip(sys.select.row(i).iter())
            .filter(|(_, c)| **c != 0.0)
            .map(|(v, c)| (*v, s * *c))
            .collect();
        if !terms.is_empty() {
            lp.add_constraint(terms, ComparisonOp::Ge, 0.0);
        }
    }
    let sol = lp.solve().ok()?;
    Some(Vector::from_iterator(nu, vars.iter().map(|v| sol[*v])))
}

/// Exact decision for polyhedral cones by enumerating the linear pieces of
/// `Π'` and maximizing/minimizing each constrained coordinate by LP.
pub fn face_enum(sys: &HomogeneousSystem, cfg: &StabilityConfig) -> Result<StabilityVerdict> {
    let coefs = polyhedral_coefficients(&sys.face)?;
    let degenerate: Vec<usize> =
        coefs.iter().enumerate().filter(|(_, c)| matches!(c, Coef::Degenerate(_))).map(|(i, _)| i).collect();
    if degenerate.len() > MAX_DEGENERATE {
        return Err(Error::Config(format!(
            "face enumeration over {} degenerate indices exceeds the limit of {MAX_DEGENERATE}",
            degenerate.len()
        )));
    }
    let (n, m) = (sys.n, sys.m);
    let mut best_bad: Option<f64> = None;
    for mask in 0u32..(1u32 << degenerate.len()) {
        let mut c = Vector::zeros(m);
        let mut signs = Vec::new();
        for (i, coef) in coefs.iter().enumerate() {
            match coef {
                Coef::Fixed(v) => c[i] = *v,
                Coef::Degenerate(s) => {
                    let bit = degenerate.iter().position(|&d| d == i).unwrap();
                    if mask & (1 << bit) != 0 {
                        c[i] = 1.0;
                        signs.push((i, *s));
                    } else {
                        signs.push((i, -*s));
                    }
                }
            }
        }
        let mut matrix = sys.lin.clone();
        let mut tail = matrix.rows_mut(n, m);
        tail -= Matrix::from_diagonal(&c) * &sys.select;
        let piece = Piece { matrix, signs };
        for k in sys.constrained.clone() {
            for dir in [1.0, -1.0] {
                let Some((opt, u)) = lp_extreme(sys, &piece, &[(k, dir)]) else { continue };
                if opt <= LP_ZERO {
                    continue;
                }
                let u = lp_polish(sys, &piece, k, u[k]).unwrap_or(u);
                if let Some((u, r)) = sys.normalized_residual(&u)? {
                    if r <= cfg.tol {
                        return Ok(sys.fails(&u, r, MethodTag::FaceEnum, None));
                    }
                    best_bad = Some(best_bad.map_or(r, |b: f64| b.min(r)));
                }
            }
        }
    }
    // A nonzero LP optimum whose witness does not re-verify is a numerical
    // problem, not a proof either way.
    let status = if best_bad.is_some() { Status::Inconclusive } else { Status::Holds };
    Ok(StabilityVerdict {
        mode: sys.mode,
        status,
        witness: None,
        residual: best_bad,
        method: MethodTag::FaceEnum,
        exact: status == Status::Holds,
        seed: None,
    })
}

const LM_MAX_ITER: usize = 200;
const START_RADII: [f64; 3] = [1.0, 10.0, 100.0];

fn lm_start(sys: &HomogeneousSystem, seed: u64, index: usize) -> Result<Option<(Vector, f64)>> {
    let mut rng = derived_rng(seed, index as u64);
    let nu = sys.unknowns();
    let radius = START_RADII[index % START_RADII.len()];
    let mut u = Vector::zeros(nu);
    let c = sys.constrained.clone();
    let dir = gaussian_vector(&mut rng, c.len());
    let dn = dir.norm().max(1e-300);
    u.rows_mut(c.start, c.len()).copy_from(&(dir / dn));
    if !sys.free.is_empty() {
        // v₀: least-squares solve of the linear rows for the sampled ξ.
        let f = sys.free.clone();
        let a = sys.lin.columns(f.start, f.len()).rows(0, sys.n).clone_owned();
        let rhs = -(sys.lin.columns(c.start, c.len()).rows(0, sys.n) * u.rows(c.start, c.len()));
        let v0 = pseudo_inverse(&a, 1e-12) * rhs + uniform_ball(&mut rng, f.len(), radius);
        u.rows_mut(f.start, f.len()).copy_from(&v0);
    }
    let clamp = |u: &mut Vector| {
        if sys.free.is_empty() {
            return;
        }
        let mut v = u.rows_mut(sys.free.start, sys.free.len());
        let nv = v.norm();
        if nv > radius {
            v *= radius / nv;
        }
    };
    clamp(&mut u);
    let aug = |u: &Vector| -> Result<Vector> {
        let r = sys.residual(u)?;
        let s = sys.constrained_norm(u);
        Ok(Vector::from_iterator(r.len() + 1, r.iter().copied().chain(std::iter::once(s * s - 1.0))))
    };
    let mut f = aug(&u)?;
    let mut mu = 1e-3;
    for _ in 0..LM_MAX_ITER {
        if f.norm() <= 1e-15 {
            break;
        }
        let jr = sys.residual_jacobian(&u)?;
        let mut j = Matrix::zeros(jr.nrows() + 1, nu);
        j.rows_mut(0, jr.nrows()).copy_from(&jr);
        for k in c.clone() {
            j[(jr.nrows(), k)] = 2.0 * u[k];
        }
        let g = j.transpose() * &f;
        let h = j.transpose() * &j;
        let mut accepted = false;
        while mu < 1e12 {
            let a = &h + Matrix::identity(nu, nu) * mu;
            let Some(ch) = a.cholesky() else {
                mu *= 4.0;
                continue;
            };
            let mut trial = &u - ch.solve(&g);
            clamp(&mut trial);
            let ft = aug(&trial)?;
            if ft.norm() < f.norm() {
                u = trial;
                f = ft;
                mu = (mu / 3.0).max(1e-15);
                accepted = true;
                break;
            }
            mu *= 4.0;
        }
        if !accepted {
            break;
        }
    }
    sys.normalized_residual(&u)
}

/// Multistart Levenberg–Marquardt on the residual augmented with the
/// normalization `‖u_c‖² = 1`. Any start reaching `tol` is a certificate;
/// `Holds` only means every start stayed above `10·tol`.
pub fn multistart(sys: &HomogeneousSystem, cfg: &StabilityConfig) -> Result<StabilityVerdict> {
    let runs: Vec<Result<Option<(Vector, f64)>>> =
        (0..cfg.starts).into_par_iter().map(|s| lm_start(sys, cfg.seed, s)).collect();
    let mut best: Option<(Vector, f64)> = None;
    for r in runs {
        if let Some((u, res)) = r? {
            if best.as_ref().is_none_or(|(_, b)| res < *b) {
                best = Some((u, res));
            }
        }
    }
    let seed = Some(cfg.seed);
    match best {
        Some((u, r)) if r <= cfg.tol => Ok(sys.fails(&u, r, MethodTag::Multistart, seed)),
        other => {
            let residual = other.map(|(_, r)| r);
            let status =
                if residual.is_some_and(|r| r <= 10.0 * cfg.tol) { Status::Inconclusive } else { Status::Holds };
            Ok(StabilityVerdict {
                mode: sys.mode,
                status,
                witness: None,
                residual,
                method: MethodTag::Multistart,
                exact: false,
                seed,
            })
        }
    }
}

/// Noncriticality of `λ̄`: `Holds` means no solution with `ξ ≠ 0`.
pub fn noncriticality_test(prog: &ConicProgram, point: &KktPoint, cfg: &StabilityConfig) -> Result<StabilityVerdict> {
    decide(&HomogeneousSystem::from_point(prog, point, Mode::Noncritical)?, cfg)
}

/// Isolated calmness of the primal solution map.
pub fn x_isolated_calmness_test(
    prog: &ConicProgram,
    point: &KktPoint,
    cfg: &StabilityConfig,
) -> Result<StabilityVerdict> {
    decide(&HomogeneousSystem::from_point(prog, point, Mode::XIsolated)?, cfg)
}

/// Isolated calmness of the multiplier map: `Π'(ȳ+λ̄; Δλ) = 0` and
/// `∇g(x̄)Δλ = 0` only for `Δλ = 0`.
pub fn m_isolated_calmness_test(
    prog: &ConicProgram,
    point: &KktPoint,
    cfg: &StabilityConfig,
) -> Result<StabilityVerdict> {
    decide(&HomogeneousSystem::from_point(prog, point, Mode::MIsolated)?, cfg)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkktVerdict {
    pub direct: StabilityVerdict,
    pub m_isolated: StabilityVerdict,
    pub noncritical: StabilityVerdict,
    /// Direct decision agrees with `m_isolated ∧ noncritical`.
    pub consistent: bool,
}

/// Isolated calmness of the KKT solution map, decided directly and through
/// the conjunction of the multiplier and noncriticality tests.
pub fn skkt_isolated_calmness_test(prog: &ConicProgram, point: &KktPoint, cfg: &StabilityConfig) -> Result<SkktVerdict> {
    let direct = decide(&HomogeneousSystem::from_point(prog, point, Mode::SkktIsolated)?, cfg)?;
    let m_isolated = m_isolated_calmness_test(prog, point, cfg)?;
    let noncritical = noncriticality_test(prog, point, cfg)?;
    let statuses = [direct.status, m_isolated.status, noncritical.status];
    let consistent = if statuses.contains(&Status::Inconclusive) {
        true
    } else {
        (direct.status == Status::Holds)
            == (m_isolated.status == Status::Holds && noncritical.status == Status::Holds)
    };
    if !consistent {
        return Err(Error::Inconsistent(format!(
            "S_KKT isolated calmness: direct {:?}, multiplier {:?}, noncriticality {:?}",
            direct.status, m_isolated.status, noncritical.status
        )));
    }
    Ok(SkktVerdict { direct, m_isolated, noncritical, consistent })
}

const PREIMAGE_MAX_ITER: usize = 10_000;

/// Projection-like map onto `C(x̄) = {d : g'(x̄)d ∈ C_K(ȳ, λ̄)}`, via Dykstra
/// in the product space between the graph of `g'(x̄)` and `ℝⁿ × C_K`.
#[derive(Clone, Debug)]
pub struct CriticalPreimage {
    jac: Matrix,
    graph_solve: Matrix,
    face: FaceDescriptor,
}

impl CriticalPreimage {
    pub fn new(jac: &Matrix, face: &FaceDescriptor) -> Self {
        let n = jac.ncols();
        let g = Matrix::identity(n, n) + jac.transpose() * jac;
        let graph_solve = g.try_inverse().expect("I + JᵀJ is positive definite");
        CriticalPreimage { jac: jac.clone(), graph_solve, face: face.clone() }
    }

    fn graph(&self, d: &Vector, h: &Vector) -> (Vector, Vector) {
        let dp = &self.graph_solve * (d + self.jac.transpose() * h);
        let hp = &self.jac * &dp;
        (dp, hp)
    }

    /// Distance from `g'(x̄)d` to the critical cone.
    pub fn infeasibility(&self, d: &Vector) -> Result<f64> {
        let h = &self.jac * d;
        Ok((&h - self.face.project_onto_critical_cone(&h)?).norm())
    }

    /// A point of `C(x̄)` near `d` (the product-space projection of `(d, g'(x̄)d)`).
    pub fn pull(&self, d: &Vector) -> Result<Vector> {
        let mut x = d.clone();
        let mut y = &self.jac * d;
        if self.infeasibility(d)? <= 1e-14 * (1.0 + d.norm()) {
            return Ok(x);
        }
        let (n, m) = (x.len(), y.len());
        let (mut pd, mut ph) = (Vector::zeros(n), Vector::zeros(m));
        let (mut qd, mut qh) = (Vector::zeros(n), Vector::zeros(m));
        for _ in 0..PREIMAGE_MAX_ITER {
            let (ad, ah) = self.graph(&(&x + &pd), &(&y + &ph));
            pd = &x + &pd - &ad;
            ph = &y + &ph - &ah;
            let bd = &ad + &qd;
            let bh = self.face.project_onto_critical_cone(&(&ah + &qh))?;
            qd = &ad + &qd - &bd;
            qh = &ah + &qh - &bh;
            let gap = ((&bd - &x).norm_squared() + (&bh - &y).norm_squared()).sqrt();
            x = bd;
            y = bh;
            if gap <= 1e-13 * (1.0 + x.norm()) {
                break;
            }
        }
        Ok(self.graph(&x, &y).0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SoscResult {
    pub status: Status,
    /// Smallest value of the curvature-corrected form found on `C(x̄) ∩ S`.
    pub min_value: Option<f64>,
    pub witness: Option<Vec<f64>>,
    pub feasibility: Option<f64>,
    /// `C(x̄) = {0}`, so the condition holds vacuously.
    pub vacuous: bool,
    pub seed: u64,
}

const SOSC_RHOS: [f64; 3] = [1e2, 1e4, 1e6];
const RGD_ITER: usize = 400;

struct SoscObjective<'a> {
    hess: &'a Matrix,
    jac: &'a Matrix,
    face: &'a FaceDescriptor,
}

impl SoscObjective<'_> {
    fn q(&self, d: &Vector) -> Result<f64> {
        Ok(d.dot(&(self.hess * d)) + self.face.sigma_extended(&(self.jac * d))?)
    }

    fn value_grad(&self, d: &Vector, rho: f64) -> Result<(f64, Vector)> {
        let h = self.jac * d;
        let pc = self.face.project_onto_critical_cone(&h)?;
        let off = &h - pc;
        let val = self.q(d)? + rho * off.norm_squared();
        let g = self.hess * d * 2.0 + self.jac.transpose() * (self.face.sigma_gradient_extended(&h)? + off * (2.0 * rho));
        Ok((val, g))
    }
}

fn riemannian_descent(obj: &SoscObjective, mut d: Vector, rho: f64) -> Result<Vector> {
    let (mut val, mut g) = obj.value_grad(&d, rho)?;
    let mut step = 1.0 / (1.0 + rho);
    for _ in 0..RGD_ITER {
        let rg = &g - &d * g.dot(&d);
        if rg.norm() <= 1e-12 {
            break;
        }
        let mut moved = false;
        for _ in 0..60 {
            let trial = &d - &rg * step;
            let trial = &trial / trial.norm();
            let (tv, tg) = obj.value_grad(&trial, rho)?;
            if tv < val - 1e-4 * step * rg.norm_squared() {
                d = trial;
                val = tv;
                g = tg;
                step *= 2.0;
                moved = true;
                break;
            }
            step *= 0.5;
        }
        if !moved {
            break;
        }
    }
    Ok(d)
}

/// Second-order sufficient condition
/// `⟨d, ∇²L d⟩ + Υ(g'(x̄)d) > 0` on `C(x̄) \ {0}`, by multistart Riemannian
/// descent of a penalized objective on the unit sphere.
pub fn sosc_test(prog: &ConicProgram, point: &KktPoint, cfg: &StabilityConfig) -> Result<SoscResult> {
    let hess = prog.lagrangian_hessian(&point.x, &point.lambda)?;
    let jac = prog.jac_g(&point.x)?;
    let obj = SoscObjective { hess: &hess, jac: &jac, face: &point.face };
    let pre = CriticalPreimage::new(&jac, &point.face);
    let n = prog.n();
    let runs: Vec<Result<Option<(f64, Vector, f64)>>> = (0..cfg.starts)
        .into_par_iter()
        .map(|s| {
            let mut rng = derived_rng(cfg.seed, s as u64);
            let mut d = gaussian_vector(&mut rng, n);
            d /= d.norm().max(1e-300);
            let mut best: Option<(f64, Vector, f64)> = None;
            for rho in SOSC_RHOS {
                d = riemannian_descent(&obj, d, rho)?;
                let p = pre.pull(&d)?;
                let pn = p.norm();
                if pn <= 1e-8 {
                    continue;
                }
                let p = p / pn;
                let feas = pre.infeasibility(&p)?;
                if feas > 1e-8 {
                    continue;
                }
                let q = obj.q(&p)?;
                if best.as_ref().is_none_or(|(b, _, _)| q < *b) {
                    best = Some((q, p.clone(), feas));
                }
                d = p;
            }
            Ok(best)
        })
        .collect();
    let mut best: Option<(f64, Vector, f64)> = None;
    for r in runs {
        if let Some(c) = r? {
            if best.as_ref().is_none_or(|(b, _, _)| c.0 < *b) {
                best = Some(c);
            }
        }
    }
    let Some((q, d, feas)) = best else {
        return Ok(SoscResult {
            status: Status::Holds,
            min_value: None,
            witness: None,
            feasibility: None,
            vacuous: true,
            seed: cfg.seed,
        });
    };
    let status = if q >= cfg.sosc_margin {
        Status::Holds
    } else if q <= -cfg.sosc_margin {
        Status::Fails
    } else {
        Status::Inconclusive
    };
    Ok(SoscResult {
        status,
        min_value: Some(q),
        witness: (status == Status::Fails).then(|| d.iter().copied().collect()),
        feasibility: Some(feas),
        vacuous: false,
        seed: cfg.seed,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignWitness {
    pub xi: Vec<f64>,
    pub zeta: Vec<f64>,
    pub product: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignCheck {
    /// Samples whose `ξ` admitted some `ζ` in the set.
    pub feasible: usize,
    pub min_product: Option<f64>,
    pub witness: Option<SignWitness>,
    pub falsified: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignProbeResult {
    pub samples: usize,
    /// Samples of `ξ` on the unit sphere of `C(x̄)` (zero when `C(x̄) = {0}`).
    pub nonzero_directions: usize,
    pub gamma: SignCheck,
    pub gamma_tilde: SignCheck,
    pub seed: u64,
}

const SIGN_TOL: f64 = 1e-8;
const FEAS_MAX_ITER: usize = 5_000;

/// Alternating projections between an affine set and a closed convex cone;
/// returns the last affine iterate and the final gap.
fn alternating(
    start: &Vector,
    proj_affine: impl Fn(&Vector) -> Vector,
    proj_cone: impl Fn(&Vector) -> Result<Vector>,
) -> Result<(Vector, f64)> {
    let mut a = proj_affine(start);
    let mut gap = f64::INFINITY;
    for _ in 0..FEAS_MAX_ITER {
        let b = proj_cone(&a)?;
        let an = proj_affine(&b);
        let step = (&an - &a).norm();
        gap = (&b - &an).norm();
        a = an;
        if gap <= 1e-12 * (1.0 + a.norm()) || step <= 1e-15 * (1.0 + a.norm()) {
            break;
        }
    }
    Ok((a, gap))
}

/// Samples `(ξ, ζ) ∈ Σ` with `g'(x̄)ξ` in the critical cone and searches for
/// a negative `⟨g'(x̄)ξ, ζ⟩` with `ζ` in `C°` (set Γ) or with
/// `∇g(x̄)ζ ∈ ∇g(x̄)(N_K(ȳ) + ℝλ̄)` (set Γ̃). Can only falsify.
pub fn sigma_gamma_sign_probe(prog: &ConicProgram, point: &KktPoint, cfg: &StabilityConfig) -> Result<SignProbeResult> {
    let hess = prog.lagrangian_hessian(&point.x, &point.lambda)?;
    let jac = prog.jac_g(&point.x)?;
    let a = jac.transpose();
    let a_pinv = pseudo_inverse(&a, 1e-12);
    let m = prog.m();
    let row_proj = &a_pinv * &a;
    let mut span = null_space(&a, 1e-12);
    if point.lambda.norm() > 0.0 {
        let mut cols: Vec<Vector> = span.column_iter().map(|c| c.clone_owned()).collect();
        cols.push(point.lambda.clone());
        span = null_space(&Matrix::from_columns(&cols).transpose(), 1e-12);
        // `span` now holds the orthogonal complement; flip back.
        span = null_space(&span.transpose(), 1e-12);
        if span.ncols() == 0 {
            span = Matrix::zeros(m, 0);
        }
    }
    let tilde_proj = &span * span.transpose();
    let face = &point.face;
    let pre = CriticalPreimage::new(&jac, face);
    let n = prog.n();

    struct One {
        nonzero: bool,
        gamma: Option<(f64, Vector, Vector)>,
        tilde: Option<(f64, Vector, Vector)>,
    }
    let samples: Vec<Result<One>> = (0..cfg.sign_samples)
        .into_par_iter()
        .map(|s| {
            let mut rng = derived_rng(cfg.seed, s as u64);
            let d = gaussian_vector(&mut rng, n);
            let xi = pre.pull(&d)?;
            let xn = xi.norm();
            if xn <= 1e-8 || pre.infeasibility(&(&xi / xn))? > 1e-8 {
                return Ok(One { nonzero: false, gamma: None, tilde: None });
            }
            let xi = xi / xn;
            let h = &jac * &xi;
            let rhs = -(&hess * &xi + &a * face.sigma_gradient_extended(&h)? * 0.5);
            let zeta0 = &a_pinv * &rhs;
            if (&a * &zeta0 - &rhs).norm() > 1e-8 * (1.0 + rhs.norm()) {
                return Ok(One { nonzero: true, gamma: None, tilde: None });
            }
            let on_affine = |z: &Vector| z - &row_proj * (z - &zeta0);
            let (zg, gap) = alternating(&zeta0, on_affine, |z| face.project_onto_critical_polar(z))?;
            let gamma = (gap <= SIGN_TOL * (1.0 + zg.norm())).then(|| (h.dot(&zg), xi.clone(), zg));
            let on_tilde = |z: &Vector| &zeta0 + &tilde_proj * (z - &zeta0);
            let (zt, gap) = alternating(&zeta0, on_tilde, |z| face.project_onto_normal_cone(z))?;
            let tilde = (gap <= SIGN_TOL * (1.0 + zt.norm())).then(|| (h.dot(&zt), xi.clone(), zt));
            Ok(One { nonzero: true, gamma, tilde })
        })
        .collect();

    let mut nonzero = 0;
    let mut acc: [(SignCheck, Option<(f64, Vector, Vector)>); 2] = std::array::from_fn(|_| {
        (SignCheck { feasible: 0, min_product: None, witness: None, falsified: false }, None)
    });
    for s in samples {
        let s = s?;
        nonzero += s.nonzero as usize;
        for (slot, cand) in acc.iter_mut().zip([s.gamma, s.tilde]) {
            if let Some((p, xi, z)) = cand {
                slot.0.feasible += 1;
                if slot.1.as_ref().is_none_or(|(b, _, _)| p < *b) {
                    slot.1 = Some((p, xi, z));
                }
            }
        }
    }
    let [gamma, gamma_tilde] = acc.map(|(mut c, best)| {
        if let Some((p, xi, z)) = best {
            c.min_product = Some(p);
            if p <= -SIGN_TOL {
                c.falsified = true;
                c.witness = Some(SignWitness {
                    xi: xi.iter().copied().collect(),
                    zeta: z.iter().copied().collect(),
                    product: p,
                });
            }
        }
        c
    });
    Ok(SignProbeResult { samples: cfg.sign_samples, nonzero_directions: nonzero, gamma, gamma_tilde, seed: cfg.seed })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinkStatus {
    Holds,
    Broken,
    Unknown,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LadderLink {
    pub name: String,
    pub status: LinkStatus,
    /// Established by sampling or a bounded search rather than a proof.
    pub heuristic: bool,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LadderReport {
    pub links: Vec<LadderLink>,
    pub broken_at: Option<String>,
    pub conclusion: String,
    pub subregularity: RatioStats,
}

/// Evaluates the sufficient conditions for strong calmness in the order
/// noncriticality, subregularity of `g(·) − K`, a relative-interior
/// multiplier, and the Σ∩Γ̃ sign condition.
pub fn strong_calmness_sufficient(
    prog: &ConicProgram,
    point: &KktPoint,
    cfg: &StabilityConfig,
    probe: &ProbeConfig,
) -> Result<LadderReport> {
    let nc = noncriticality_test(prog, point, cfg)?;
    let sub = subregularity_probe(prog, &point.x, probe)?;
    let mref = MultiplierSetRef::new(prog, point)?;
    let ri = find_ri_multiplier(&mref, RI_MARGIN)?;
    let sign = sigma_gamma_sign_probe(prog, point, cfg)?;

    let links = vec![
        LadderLink {
            name: "noncriticality".into(),
            status: match nc.status {
                Status::Holds => LinkStatus::Holds,
                Status::Fails => LinkStatus::Broken,
                Status::Inconclusive => LinkStatus::Unknown,
            },
            heuristic: !nc.exact && nc.status == Status::Holds,
            detail: format!("{:?} via {:?}", nc.status, nc.method),
        },
        LadderLink {
            name: "subregularity".into(),
            status: match sub.classification {
                Growth::Bounded => LinkStatus::Holds,
                Growth::Diverging => LinkStatus::Broken,
            },
            heuristic: true,
            detail: format!("max ratio {:.3e}, growth {:.2}x per decade", sub.max_ratio, sub.growth_per_decade),
        },
        LadderLink {
            name: "ri_multiplier".into(),
            status: if ri.is_some() { LinkStatus::Holds } else { LinkStatus::Unknown },
            heuristic: true,
            detail: match &ri {
                Some(r) => format!("found {:?}", r.lambda),
                None => "none found within the search budget".into(),
            },
        },
        LadderLink {
            name: "sign_condition".into(),
            status: if sign.gamma_tilde.falsified { LinkStatus::Broken } else { LinkStatus::Holds },
            heuristic: true,
            detail: match sign.gamma_tilde.min_product {
                Some(p) => format!("min product {p:.3e} over {} feasible samples", sign.gamma_tilde.feasible),
                None => "no feasible samples".into(),
            },
        },
    ];
    let broken_at = links.iter().find(|l| l.status != LinkStatus::Holds).map(|l| l.name.clone());
    let conclusion = match &broken_at {
        None => "sufficient conditions met (heuristic links flagged): strong calmness".into(),
        Some(name) => format!("not established: chain breaks at {name}"),
    };
    Ok(LadderReport { links, broken_at, conclusion, subregularity: sub })
}
