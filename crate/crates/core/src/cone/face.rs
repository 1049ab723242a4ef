//! Facial description of a complementary pair `(ȳ, λ̄)` with `λ̄ ∈ N_K(ȳ)`.
//!
//! The descriptor is what makes critical cones, their polars, normal cones
//! and the directional derivative of the projection computable in closed
//! form. All formulas are blockwise:
//!
//! * orthant blocks partition indices into strictly active, degenerate
//!   (`ȳᵢ = λ̄ᵢ = 0`) and inactive;
//! * second-order blocks carry one of five geometric cases;
//! * PSD blocks carry an orthonormal eigenbasis of `ȳ + λ̄` split into
//!   `α` (positive eigenvalues, range of `ȳ`), `β` (joint kernel) and
//!   `γ` (negative eigenvalues, range of `λ̄`).
//!
//! For polyhedral blocks `Π'_K(ȳ+λ̄; ·)` is the projection onto the critical
//! cone and the sigma term vanishes. The curved cases use the standard
//! closed forms; both are cross-checked against the projection-derivative
//! identity in [`FaceDescriptor::normal_graph_deriv_contains`].

use serde::{Deserialize, Serialize};

use super::svec::{smat, svec};
use super::{psd, soc, ConeBlock, ProductCone};
use crate::error::{Error, Result};
use crate::linalg::{jacobi_eigen, Matrix, SymEigen, Vector};

/// Index class of an orthant coordinate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum OrthantClass {
    /// `ȳᵢ = 0` with a nonzero multiplier.
    Strict,
    /// `ȳᵢ = 0` and `λ̄ᵢ = 0`.
    Degenerate,
    /// `ȳᵢ` strictly inside the orthant.
    Inactive,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "case", rename_all = "snake_case")]
pub enum SocFace {
    /// `ȳ ∈ int K`, `λ̄ = 0`.
    Interior,
    /// `ȳ = 0`, `λ̄ ∈ int K°`.
    VertexPolarInterior,
    /// `ȳ = 0`, `λ̄ = s(−1, w)` with `s > 0`, `‖w‖ = 1`.
    VertexPolarBoundary { w: Vec<f64> },
    /// `ȳ = 0`, `λ̄ = 0`.
    VertexZero,
    /// `ȳ = y₀(1, w)` with `y₀ > 0` and `λ̄ = s(−1, w)`, `s ≥ 0`.
    Boundary { w: Vec<f64>, y0: f64, s: f64 },
}

#[derive(Clone, Debug)]
pub struct PsdFace {
    pub order: usize,
    pub eigen: SymEigen,
    pub alpha: Vec<usize>,
    pub beta: Vec<usize>,
    pub gamma: Vec<usize>,
}

#[derive(Clone, Debug)]
pub enum BlockFace {
    Zero,
    Orthant { sign: f64, classes: Vec<OrthantClass> },
    SecondOrder(SocFace),
    Psd(PsdFace),
}

/// A rank or activity decision whose deciding value sat close to the
/// threshold.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ambiguity {
    pub block: usize,
    pub value: f64,
    pub threshold: f64,
}

/// Facial data of `(ȳ, λ̄)` over a product cone.
#[derive(Clone, Debug)]
pub struct FaceDescriptor {
    cone: ProductCone,
    faces: Vec<BlockFace>,
    tol_rank: f64,
    ambiguities: Vec<Ambiguity>,
}

/// Relative tolerance for the complementarity pre-check in [`FaceDescriptor::new`].
const COMPLEMENTARITY_FACTOR: f64 = 100.0;

impl FaceDescriptor {
    /// Builds the descriptor for a pair with `λ ∈ N_K(y)`.
    pub fn new(cone: &ProductCone, y: &Vector, lambda: &Vector, tol_rank: f64) -> Result<Self> {
        cone.check_len(y, "face_descriptor")?;
        cone.check_len(lambda, "face_descriptor")?;
        let (block, violation) = cone.violation(y)?;
        let tol = COMPLEMENTARITY_FACTOR * tol_rank;
        if violation > tol * (1.0 + y.norm()) {
            return Err(Error::Infeasible { block, violation });
        }
        let p = cone.project(&(y + lambda))?;
        for (i, _, r) in cone.iter() {
            let ys = y.rows(r.start, r.len());
            let ls = lambda.rows(r.start, r.len());
            let residual = (ys - p.rows(r.start, r.len())).norm();
            if residual > tol * (1.0 + ys.norm() + ls.norm()) {
                return Err(Error::NotNormal { block: i, residual });
            }
        }
        Self::classify(cone, y, lambda, tol_rank)
    }

    /// Descriptor at `(Π_K(z), z − Π_K(z))`, which is complementary by construction.
    pub fn at_projection(cone: &ProductCone, z: &Vector, tol_rank: f64) -> Result<Self> {
        let y = cone.project(z)?;
        let lambda = z - &y;
        Self::classify(cone, &y, &lambda, tol_rank)
    }

    fn classify(cone: &ProductCone, y: &Vector, lambda: &Vector, tol_rank: f64) -> Result<Self> {
        let mut faces = Vec::with_capacity(cone.blocks().len());
        let mut amb = Vec::new();
        for (i, block, r) in cone.iter() {
            let ys = &y.as_slice()[r.clone()];
            let ls = &lambda.as_slice()[r.clone()];
            let scale = 1.0 + norm(ys) + norm(ls);
            let thr = tol_rank * scale;
            let mut note = |value: f64, threshold: f64| {
                let a = value.abs();
                if a > threshold / 100.0 && a <= threshold * 100.0 {
                    amb.push(Ambiguity { block: i, value, threshold });
                }
            };
            let face = match *block {
                ConeBlock::Zero { .. } => BlockFace::Zero,
                ConeBlock::Orthant { sign, .. } => {
                    let s = sign.factor();
                    let classes = ys
                        .iter()
                        .zip(ls)
                        .map(|(&yi, &li)| {
                            note(yi, thr);
                            if s * yi > thr {
                                OrthantClass::Inactive
                            } else {
                                note(li, thr);
                                if s * li < -thr {
                                    OrthantClass::Strict
                                } else {
                                    OrthantClass::Degenerate
                                }
                            }
                        })
                        .collect();
                    BlockFace::Orthant { sign: s, classes }
                }
                ConeBlock::SecondOrder { .. } => {
                    BlockFace::SecondOrder(classify_soc(ys, ls, thr, &mut note))
                }
                ConeBlock::Psd { order } => {
                    let z: Vec<f64> = ys.iter().zip(ls).map(|(a, b)| a + b).collect();
                    let eigen = jacobi_eigen(&smat(&z, order)).ok_or(Error::EigenNoConvergence {
                        block: i,
                        sweeps: crate::linalg::JACOBI_MAX_SWEEPS,
                    })?;
                    let pthr = tol_rank * (1.0 + eigen.spectral_scale());
                    let (mut alpha, mut beta, mut gamma) = (vec![], vec![], vec![]);
                    for (k, &d) in eigen.values.iter().enumerate() {
                        note(d, pthr);
                        if d > pthr {
                            alpha.push(k);
                        } else if d < -pthr {
                            gamma.push(k);
                        } else {
                            beta.push(k);
                        }
                    }
                    BlockFace::Psd(PsdFace { order, eigen, alpha, beta, gamma })
                }
            };
            faces.push(face);
        }
        Ok(FaceDescriptor { cone: cone.clone(), faces, tol_rank, ambiguities: amb })
    }

    pub fn cone(&self) -> &ProductCone {
        &self.cone
    }

    pub fn faces(&self) -> &[BlockFace] {
        &self.faces
    }

    pub fn tol_rank(&self) -> f64 {
        self.tol_rank
    }

    /// Borderline rank/activity decisions, for reporting.
    pub fn ambiguities(&self) -> &[Ambiguity] {
        &self.ambiguities
    }

    fn map_blocks(
        &self,
        v: &Vector,
        context: &'static str,
        f: impl Fn(&BlockFace, &[f64], &mut [f64]),
    ) -> Result<Vector> {
        self.cone.check_len(v, context)?;
        let mut out = Vector::zeros(v.len());
        for ((_, _, r), face) in self.cone.iter().zip(&self.faces) {
            f(face, &v.as_slice()[r.clone()], &mut out.as_mut_slice()[r]);
        }
        Ok(out)
    }

    /// Euclidean projection onto `C_K(ȳ, λ̄) = T_K(ȳ) ∩ λ̄^⊥`.
    pub fn project_onto_critical_cone(&self, h: &Vector) -> Result<Vector> {
        self.map_blocks(h, "project_onto_critical_cone", project_critical_block)
    }

    /// Euclidean projection onto the polar `[C_K(ȳ, λ̄)]°` (Moreau complement).
    pub fn project_onto_critical_polar(&self, w: &Vector) -> Result<Vector> {
        Ok(w - self.project_onto_critical_cone(w)?)
    }

    /// Euclidean projection onto `N_K(ȳ)`.
    pub fn project_onto_normal_cone(&self, w: &Vector) -> Result<Vector> {
        self.map_blocks(w, "project_onto_normal_cone", project_normal_block)
    }

    pub fn critical_cone_contains(&self, h: &Vector, tol: f64) -> Result<bool> {
        let d = (h - self.project_onto_critical_cone(h)?).norm();
        Ok(d <= tol * (1.0 + h.norm()))
    }

    pub fn critical_polar_contains(&self, w: &Vector, tol: f64) -> Result<bool> {
        let d = self.project_onto_critical_cone(w)?.norm();
        Ok(d <= tol * (1.0 + w.norm()))
    }

    /// `Π'_K(ȳ + λ̄; h)`.
    pub fn proj_dirderiv(&self, h: &Vector) -> Result<Vector> {
        self.map_blocks(h, "proj_dirderiv", dirderiv_block)
    }

    /// An element of the generalized Jacobian of `h ↦ Π'_K(ȳ + λ̄; h)` at `h`.
    pub fn dirderiv_jacobian(&self, h: &Vector) -> Result<Matrix> {
        self.cone.check_len(h, "dirderiv_jacobian")?;
        let m = h.len();
        let mut j = Matrix::zeros(m, m);
        for ((_, _, r), face) in self.cone.iter().zip(&self.faces) {
            let d = r.len();
            let jb = dirderiv_jacobian_block(face, &h.as_slice()[r.clone()]);
            j.view_mut((r.start, r.start), (d, d)).copy_from(&jb);
        }
        Ok(j)
    }

    /// Sigma term `Υ(h)` of the quadratic extension off the critical cone.
    /// Equals `−σ(λ̄, T²_K(ȳ, h))` for `h ∈ C_K(ȳ, λ̄)`.
    pub fn sigma_extended(&self, h: &Vector) -> Result<f64> {
        self.cone.check_len(h, "sigma_term")?;
        Ok(self
            .cone
            .iter()
            .zip(&self.faces)
            .map(|((_, _, r), face)| sigma_block(face, &h.as_slice()[r]))
            .sum())
    }

    /// Gradient of [`Self::sigma_extended`].
    pub fn sigma_gradient_extended(&self, h: &Vector) -> Result<Vector> {
        self.map_blocks(h, "sigma_gradient", sigma_grad_block)
    }

    fn require_critical(&self, h: &Vector) -> Result<()> {
        let d = (h - self.project_onto_critical_cone(h)?).norm();
        if d > 1e-8 * (1.0 + h.norm()) {
            return Err(Error::NotCritical { distance: d });
        }
        Ok(())
    }

    /// `Υ(h) = −σ(λ̄, T²_K(ȳ, h))` for `h` in the critical cone.
    pub fn sigma_term(&self, h: &Vector) -> Result<f64> {
        self.require_critical(h)?;
        self.sigma_extended(h)
    }

    /// `∇Υ(h)` for `h` in the critical cone.
    pub fn sigma_gradient(&self, h: &Vector) -> Result<Vector> {
        self.require_critical(h)?;
        self.sigma_gradient_extended(h)
    }

    /// Decides `Δλ ∈ DN_K(ȳ|λ̄)(Δy)` in two independent ways:
    ///
    /// 1. `Δy = Π'_K(ȳ + λ̄; Δy + Δλ)`;
    /// 2. `Δy ∈ C`, `Δλ − ½∇Υ(Δy) ∈ C°` and `⟨Δy, Δλ⟩ = Υ(Δy)`.
    ///
    /// A disagreement is returned as [`Error::CharacterizationMismatch`].
    pub fn normal_graph_deriv_contains(&self, dy: &Vector, dlam: &Vector, tol: f64) -> Result<bool> {
        let (a, b) = self.graph_deriv_routes(dy, dlam, tol)?;
        if a != b {
            return Err(Error::CharacterizationMismatch { projection_route: a, facial_route: b });
        }
        Ok(a)
    }

    /// Verdicts of the two routes, without the agreement check.
    pub fn graph_deriv_routes(&self, dy: &Vector, dlam: &Vector, tol: f64) -> Result<(bool, bool)> {
        let scale = 1.0 + dy.norm() + dlam.norm();
        let pd = self.proj_dirderiv(&(dy + dlam))?;
        let route_a = (dy - pd).norm() <= tol * scale;

        let in_c = (dy - self.project_onto_critical_cone(dy)?).norm() <= tol * scale;
        let route_b = in_c && {
            let grad = self.sigma_gradient_extended(dy)?;
            let shifted = dlam - grad * 0.5;
            let polar_ok = self.project_onto_critical_cone(&shifted)?.norm() <= tol * scale;
            let ups = self.sigma_extended(dy)?;
            polar_ok && (dy.dot(dlam) - ups).abs() <= tol * scale * scale
        };
        Ok((route_a, route_b))
    }

    /// Smallest facial slack of `λ` inside `N_K(ȳ)`: positive iff `λ` lies in
    /// the relative interior (assuming `λ ∈ N_K(ȳ)`). `+∞` when the normal
    /// cone is a subspace.
    pub fn ri_margin(&self, lambda: &Vector) -> Result<f64> {
        self.cone.check_len(lambda, "ri_margin")?;
        let mut margin = f64::INFINITY;
        for ((_, _, r), face) in self.cone.iter().zip(&self.faces) {
            margin = margin.min(ri_margin_block(face, &lambda.as_slice()[r]));
        }
        Ok(margin)
    }

    /// A fixed unit-scale point of `ri N_K(ȳ)` (zero on blocks whose normal
    /// cone is a subspace).
    pub fn ri_direction(&self) -> Vector {
        let mut out = Vector::zeros(self.cone.total_dim());
        for ((_, _, r), face) in self.cone.iter().zip(&self.faces) {
            ri_direction_block(face, &mut out.as_mut_slice()[r]);
        }
        out
    }
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn classify_soc(ys: &[f64], ls: &[f64], thr: f64, note: &mut impl FnMut(f64, f64)) -> SocFace {
    let (t, u) = (ys[0], &ys[1..]);
    let nu = norm(u);
    let (l0, lu) = (ls[0], &ls[1..]);
    let nl = norm(lu);
    let ymag = norm(ys);
    note(ymag, thr);
    if ymag <= thr {
        let lmag = norm(ls);
        note(lmag, thr);
        if lmag <= thr {
            return SocFace::VertexZero;
        }
        let slack = -l0 - nl;
        note(slack, thr);
        if slack > thr || nl == 0.0 {
            SocFace::VertexPolarInterior
        } else {
            SocFace::VertexPolarBoundary { w: lu.iter().map(|x| x / nl).collect() }
        }
    } else {
        let slack = t - nu;
        note(slack, thr);
        if slack > thr || nu == 0.0 {
            SocFace::Interior
        } else {
            let s = 0.5 * (nl - l0);
            note(s, thr);
            let s = if s > thr { s } else { 0.0 };
            SocFace::Boundary { w: u.iter().map(|x| x / nu).collect(), y0: t, s }
        }
    }
}

/// `(1, w)/√2` and `(−1, w)/√2`.
fn ray_dirs(w: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let c = std::f64::consts::FRAC_1_SQRT_2;
    let mut a = vec![c];
    let mut b = vec![-c];
    a.extend(w.iter().map(|x| c * x));
    b.extend(w.iter().map(|x| c * x));
    (a, b)
}

fn project_critical_block(face: &BlockFace, h: &[f64], out: &mut [f64]) {
    match face {
        BlockFace::Zero => out.iter_mut().for_each(|o| *o = 0.0),
        BlockFace::Orthant { sign, classes } => {
            for ((o, &hi), c) in out.iter_mut().zip(h).zip(classes) {
                *o = match c {
                    OrthantClass::Strict => 0.0,
                    OrthantClass::Degenerate => sign * (sign * hi).max(0.0),
                    OrthantClass::Inactive => hi,
                };
            }
        }
        BlockFace::SecondOrder(f) => match f {
            SocFace::Interior => out.copy_from_slice(h),
            SocFace::VertexPolarInterior => out.iter_mut().for_each(|o| *o = 0.0),
            SocFace::VertexPolarBoundary { w } => {
                let (a, _) = ray_dirs(w);
                let c = dot(h, &a).max(0.0);
                out.iter_mut().zip(&a).for_each(|(o, ai)| *o = c * ai);
            }
            SocFace::VertexZero => soc::project(h, out),
            SocFace::Boundary { w, s, .. } => {
                let (_, b) = ray_dirs(w);
                let hb = dot(h, &b);
                let c = if *s > 0.0 { hb } else { hb.max(0.0) };
                out.iter_mut().zip(h.iter().zip(&b)).for_each(|(o, (hi, bi))| *o = hi - c * bi);
            }
        },
        BlockFace::Psd(f) => {
            let ht = f.to_eigenbasis(h);
            let mut out_t = ht.clone();
            f.clamp_block(&ht, &mut out_t, &f.beta, &f.beta, true);
            f.zero_pairs(&mut out_t, &f.beta, &f.gamma);
            f.zero_pairs(&mut out_t, &f.gamma, &f.gamma);
            out.copy_from_slice(f.from_eigenbasis(&out_t).as_slice());
        }
    }
}

fn project_normal_block(face: &BlockFace, w: &[f64], out: &mut [f64]) {
    match face {
        BlockFace::Zero => out.copy_from_slice(w),
        BlockFace::Orthant { sign, classes } => {
            for ((o, &wi), c) in out.iter_mut().zip(w).zip(classes) {
                *o = match c {
                    OrthantClass::Inactive => 0.0,
                    _ => sign * (sign * wi).min(0.0),
                };
            }
        }
        BlockFace::SecondOrder(f) => match f {
            SocFace::Interior => out.iter_mut().for_each(|o| *o = 0.0),
            SocFace::VertexPolarInterior | SocFace::VertexPolarBoundary { .. } | SocFace::VertexZero => {
                soc::project_polar(w, out)
            }
            SocFace::Boundary { w: dir, .. } => {
                let (_, b) = ray_dirs(dir);
                let c = dot(w, &b).max(0.0);
                out.iter_mut().zip(&b).for_each(|(o, bi)| *o = c * bi);
            }
        },
        BlockFace::Psd(f) => {
            let wt = f.to_eigenbasis(w);
            let n = f.order;
            let mut out_t = Matrix::zeros(n, n);
            let kernel = f.kernel();
            f.clamp_block(&wt, &mut out_t, &kernel, &kernel, false);
            out.copy_from_slice(f.from_eigenbasis(&out_t).as_slice());
        }
    }
}

fn dirderiv_block(face: &BlockFace, h: &[f64], out: &mut [f64]) {
    match face {
        BlockFace::SecondOrder(SocFace::Boundary { w, y0, s }) if *s > 0.0 => {
            let j = soc::smooth_jacobian(y0 - s, w, y0 + s);
            let r = j * Vector::from_row_slice(h);
            out.copy_from_slice(r.as_slice());
        }
        BlockFace::Psd(f) => {
            let ht = f.to_eigenbasis(h);
            let mut out_t = ht.clone();
            for &i in &f.alpha {
                for &j in &f.gamma {
                    let (di, dj) = (f.eigen.values[i], f.eigen.values[j]);
                    let v = di / (di - dj) * ht[(i, j)];
                    out_t[(i, j)] = v;
                    out_t[(j, i)] = v;
                }
            }
            f.clamp_block(&ht, &mut out_t, &f.beta, &f.beta, true);
            f.zero_pairs(&mut out_t, &f.beta, &f.gamma);
            f.zero_pairs(&mut out_t, &f.gamma, &f.gamma);
            out.copy_from_slice(f.from_eigenbasis(&out_t).as_slice());
        }
        _ => project_critical_block(face, h, out),
    }
}

fn dirderiv_jacobian_block(face: &BlockFace, h: &[f64]) -> Matrix {
    let d = h.len();
    match face {
        BlockFace::Zero => Matrix::zeros(d, d),
        BlockFace::Orthant { sign, classes } => {
            let diag = Vector::from_iterator(
                d,
                h.iter().zip(classes).map(|(&hi, c)| match c {
                    OrthantClass::Strict => 0.0,
                    OrthantClass::Inactive => 1.0,
                    OrthantClass::Degenerate => {
                        if sign * hi >= 0.0 {
                            1.0
                        } else {
                            0.0
                        }
                    }
                }),
            );
            Matrix::from_diagonal(&diag)
        }
        BlockFace::SecondOrder(f) => match f {
            SocFace::Interior => Matrix::identity(d, d),
            SocFace::VertexPolarInterior => Matrix::zeros(d, d),
            SocFace::VertexPolarBoundary { w } => {
                let (a, _) = ray_dirs(w);
                let a = Vector::from_vec(a);
                if a.dot(&Vector::from_row_slice(h)) >= 0.0 {
                    &a * a.transpose()
                } else {
                    Matrix::zeros(d, d)
                }
            }
            SocFace::VertexZero => soc::jacobian(h),
            SocFace::Boundary { w, y0, s } => {
                if *s > 0.0 {
                    soc::smooth_jacobian(y0 - s, w, y0 + s)
                } else {
                    let (_, b) = ray_dirs(w);
                    let b = Vector::from_vec(b);
                    if b.dot(&Vector::from_row_slice(h)) > 0.0 {
                        Matrix::identity(d, d) - &b * b.transpose()
                    } else {
                        Matrix::identity(d, d)
                    }
                }
            }
        },
        BlockFace::Psd(f) => {
            let ht = f.to_eigenbasis(h);
            let nb = f.beta.len();
            // Löwner derivative of the ββ clamp at the current ββ block.
            let bb = Matrix::from_fn(nb, nb, |a, b| ht[(f.beta[a], f.beta[b])]);
            let inner = jacobi_eigen(&bb);
            let mut j = Matrix::zeros(d, d);
            for k in 0..d {
                let mut e = vec![0.0; d];
                e[k] = 1.0;
                let et = f.to_eigenbasis(&e);
                let mut out_t = et.clone();
                for &i in &f.alpha {
                    for &jj in &f.gamma {
                        let (di, dj) = (f.eigen.values[i], f.eigen.values[jj]);
                        let v = di / (di - dj) * et[(i, jj)];
                        out_t[(i, jj)] = v;
                        out_t[(jj, i)] = v;
                    }
                }
                if let Some(inner) = &inner {
                    let omega = psd::divided_differences(&inner.values);
                    let ebb = Matrix::from_fn(nb, nb, |a, b| et[(f.beta[a], f.beta[b])]);
                    let dbb = psd::lowner_apply(inner, &omega, &ebb);
                    for a in 0..nb {
                        for b in 0..nb {
                            out_t[(f.beta[a], f.beta[b])] = dbb[(a, b)];
                        }
                    }
                }
                f.zero_pairs(&mut out_t, &f.beta, &f.gamma);
                f.zero_pairs(&mut out_t, &f.gamma, &f.gamma);
                j.set_column(k, &f.from_eigenbasis(&out_t));
            }
            j
        }
    }
}

fn sigma_block(face: &BlockFace, h: &[f64]) -> f64 {
    match face {
        BlockFace::SecondOrder(SocFace::Boundary { w, y0, s }) if *s > 0.0 => {
            let hu = &h[1..];
            let p = dot(w, hu);
            (s / y0) * (dot(hu, hu) - p * p)
        }
        BlockFace::Psd(f) => {
            let ht = f.to_eigenbasis(h);
            let mut acc = 0.0;
            for &i in &f.alpha {
                for &j in &f.gamma {
                    let c = -f.eigen.values[j] / f.eigen.values[i];
                    acc += 2.0 * c * ht[(i, j)] * ht[(i, j)];
                }
            }
            acc
        }
        _ => 0.0,
    }
}

fn sigma_grad_block(face: &BlockFace, h: &[f64], out: &mut [f64]) {
    match face {
        BlockFace::SecondOrder(SocFace::Boundary { w, y0, s }) if *s > 0.0 => {
            let hu = &h[1..];
            let p = dot(w, hu);
            let c = 2.0 * s / y0;
            out[0] = 0.0;
            for ((o, hi), wi) in out[1..].iter_mut().zip(hu).zip(w) {
                *o = c * (hi - wi * p);
            }
        }
        BlockFace::Psd(f) => {
            let ht = f.to_eigenbasis(h);
            let n = f.order;
            let mut g = Matrix::zeros(n, n);
            for &i in &f.alpha {
                for &j in &f.gamma {
                    let c = -f.eigen.values[j] / f.eigen.values[i];
                    g[(i, j)] = 2.0 * c * ht[(i, j)];
                    g[(j, i)] = g[(i, j)];
                }
            }
            out.copy_from_slice(f.from_eigenbasis(&g).as_slice());
        }
        _ => out.iter_mut().for_each(|o| *o = 0.0),
    }
}

fn ri_margin_block(face: &BlockFace, l: &[f64]) -> f64 {
    match face {
        BlockFace::Zero => f64::INFINITY,
        BlockFace::Orthant { sign, classes } => l
            .iter()
            .zip(classes)
            .filter(|(_, c)| **c != OrthantClass::Inactive)
            .map(|(li, _)| -sign * li)
            .fold(f64::INFINITY, f64::min),
        BlockFace::SecondOrder(f) => match f {
            SocFace::Interior => f64::INFINITY,
            SocFace::Boundary { w, .. } => {
                let (_, b) = ray_dirs(w);
                dot(l, &b)
            }
            _ => -l[0] - norm(&l[1..]),
        },
        BlockFace::Psd(f) => {
            let kernel = f.kernel();
            if kernel.is_empty() {
                return f64::INFINITY;
            }
            let lt = f.to_eigenbasis(l);
            let kk = Matrix::from_fn(kernel.len(), kernel.len(), |a, b| lt[(kernel[a], kernel[b])]);
            match jacobi_eigen(&kk) {
                Some(e) => -e.values[0],
                None => f64::NEG_INFINITY,
            }
        }
    }
}

fn ri_direction_block(face: &BlockFace, out: &mut [f64]) {
    match face {
        BlockFace::Zero => {}
        BlockFace::Orthant { sign, classes } => {
            for (o, c) in out.iter_mut().zip(classes) {
                if *c != OrthantClass::Inactive {
                    *o = -sign;
                }
            }
        }
        BlockFace::SecondOrder(f) => match f {
            SocFace::Interior => {}
            SocFace::Boundary { w, .. } => {
                let (_, b) = ray_dirs(w);
                out.copy_from_slice(&b);
            }
            _ => out[0] = -1.0,
        },
        BlockFace::Psd(f) => {
            let n = f.order;
            let mut m = Matrix::zeros(n, n);
            for k in f.kernel() {
                m[(k, k)] = -1.0;
            }
            out.copy_from_slice(f.from_eigenbasis(&m).as_slice());
        }
    }
}

impl PsdFace {
    /// `β ∪ γ`, the kernel of `ȳ`.
    pub fn kernel(&self) -> Vec<usize> {
        let mut k = self.beta.clone();
        k.extend(&self.gamma);
        k
    }

    pub fn to_eigenbasis(&self, v: &[f64]) -> Matrix {
        let p = &self.eigen.vectors;
        p.transpose() * smat(v, self.order) * p
    }

    pub fn from_eigenbasis(&self, m: &Matrix) -> Vector {
        let p = &self.eigen.vectors;
        svec(&(p * m * p.transpose()))
    }

    /// Writes the projection of the `rows×cols` sub-block of `src` (a
    /// diagonal block, `rows == cols`) onto the PSD (`psd = true`) or NSD
    /// cone into `dst`.
    fn clamp_block(&self, src: &Matrix, dst: &mut Matrix, rows: &[usize], cols: &[usize], psd: bool) {
        debug_assert_eq!(rows, cols);
        if rows.is_empty() {
            return;
        }
        let k = rows.len();
        let sub = Matrix::from_fn(k, k, |a, b| src[(rows[a], cols[b])]);
        let clamped = if psd {
            psd::project_mat(&sub)
        } else {
            psd::project_mat(&(-sub)).map(|m| -m)
        }
        .unwrap_or_else(|| Matrix::zeros(k, k));
        for a in 0..k {
            for b in 0..k {
                dst[(rows[a], cols[b])] = clamped[(a, b)];
            }
        }
    }

    fn zero_pairs(&self, m: &mut Matrix, rows: &[usize], cols: &[usize]) {
        for &i in rows {
            for &j in cols {
                m[(i, j)] = 0.0;
                m[(j, i)] = 0.0;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cone::Sign;

    fn v(x: &[f64]) -> Vector {
        Vector::from_row_slice(x)
    }

    fn mat(r: &[f64]) -> Vector {
        svec(&Matrix::from_row_slice(2, 2, r))
    }

    fn psd_point() -> FaceDescriptor {
        let k = ProductCone::single(ConeBlock::Psd { order: 2 });
        FaceDescriptor::new(&k, &mat(&[1.0, 0.0, 0.0, 0.0]), &mat(&[0.0, 0.0, 0.0, -1.0]), 1e-8).unwrap()
    }

    #[test]
    fn orthant_partition() {
        let k = ProductCone::single(ConeBlock::Orthant { dim: 2, sign: Sign::NonPos });
        let fd = FaceDescriptor::new(&k, &v(&[0.0, -1.0]), &v(&[2.0, 0.0]), 1e-8).unwrap();
        match &fd.faces()[0] {
            BlockFace::Orthant { classes, .. } => {
                assert_eq!(classes, &[OrthantClass::Strict, OrthantClass::Inactive])
            }
            _ => panic!("wrong face"),
        }
    }

    #[test]
    fn psd_index_sets() {
        let fd = psd_point();
        match &fd.faces()[0] {
            BlockFace::Psd(f) => {
                assert_eq!(f.alpha, vec![0]);
                assert!(f.beta.is_empty());
                assert_eq!(f.gamma, vec![1]);
                let p = &f.eigen.vectors;
                assert!((p.transpose() * p - Matrix::identity(2, 2)).norm() < 1e-10);
            }
            _ => panic!("wrong face"),
        }
    }

    #[test]
    fn soc_boundary_case() {
        let k = ProductCone::single(ConeBlock::SecondOrder { dim: 2 });
        let fd = FaceDescriptor::new(&k, &v(&[1.0, 1.0]), &v(&[-2.0, 2.0]), 1e-8).unwrap();
        match &fd.faces()[0] {
            BlockFace::SecondOrder(SocFace::Boundary { w, y0, s }) => {
                assert_eq!(w, &vec![1.0]);
                assert_eq!(*y0, 1.0);
                assert_eq!(*s, 2.0);
            }
            f => panic!("wrong face {f:?}"),
        }
        assert!(fd.critical_cone_contains(&v(&[1.0, 1.0]), 1e-10).unwrap());
        assert!(!fd.critical_cone_contains(&v(&[1.0, 0.0]), 1e-10).unwrap());
    }

    #[test]
    fn complementarity_violation_rejected() {
        let k = ProductCone::single(ConeBlock::Orthant { dim: 1, sign: Sign::NonPos });
        assert!(matches!(
            FaceDescriptor::new(&k, &v(&[-1.0]), &v(&[1.0]), 1e-8),
            Err(Error::NotNormal { .. })
        ));
    }

    #[test]
    fn orthant_critical_cone() {
        let k = ProductCone::single(ConeBlock::Orthant { dim: 1, sign: Sign::NonPos });
        let fd = FaceDescriptor::new(&k, &v(&[0.0]), &v(&[0.0]), 1e-8).unwrap();
        assert!(fd.critical_cone_contains(&v(&[-1.0]), 1e-12).unwrap());
        assert!(!fd.critical_cone_contains(&v(&[1.0]), 1e-12).unwrap());
        assert_eq!(fd.project_onto_critical_cone(&v(&[1.0])).unwrap(), v(&[0.0]));
        assert!(fd.critical_polar_contains(&v(&[1.0]), 1e-12).unwrap());
    }

    #[test]
    fn psd_critical_and_normal() {
        let fd = psd_point();
        assert!(fd.critical_cone_contains(&mat(&[5.0, 1.0, 1.0, 0.0]), 1e-10).unwrap());
        assert!(!fd.critical_cone_contains(&mat(&[5.0, 1.0, 1.0, 1.0]), 1e-10).unwrap());
        let pn = fd.project_onto_normal_cone(&mat(&[1.0, 0.0, 0.0, -3.0])).unwrap();
        assert!((pn - mat(&[0.0, 0.0, 0.0, -3.0])).norm() < 1e-14);
    }

    #[test]
    fn zero_block_normal_is_identity() {
        let k = ProductCone::single(ConeBlock::Zero { dim: 2 });
        let fd = FaceDescriptor::new(&k, &v(&[0.0, 0.0]), &v(&[3.0, -1.0]), 1e-8).unwrap();
        assert_eq!(fd.project_onto_normal_cone(&v(&[4.0, 5.0])).unwrap(), v(&[4.0, 5.0]));
        assert_eq!(fd.project_onto_critical_cone(&v(&[4.0, 5.0])).unwrap(), v(&[0.0, 0.0]));
    }

    #[test]
    fn psd_sigma_example() {
        let fd = psd_point();
        let h = mat(&[0.0, 1.0, 1.0, 0.0]);
        assert!((fd.sigma_term(&h).unwrap() - 2.0).abs() < 1e-12);
        // Oracle: −2⟨λ̄, h ȳ† h⟩ with ȳ† = diag(1, 0).
        let hm = Matrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let ydag = Matrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        let lam = Matrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, -1.0]);
        let oracle = -2.0 * (&lam * (&hm * &ydag * &hm)).trace();
        assert!((oracle - 2.0).abs() < 1e-15);
        assert_eq!(fd.sigma_term(&Vector::zeros(3)).unwrap(), 0.0);
        assert!(matches!(fd.sigma_term(&mat(&[0.0, 0.0, 0.0, 1.0])), Err(Error::NotCritical { .. })));
    }

    #[test]
    fn polyhedral_sigma_vanishes() {
        let k = ProductCone::single(ConeBlock::Orthant { dim: 3, sign: Sign::NonNeg });
        let fd = FaceDescriptor::new(&k, &v(&[0.0, 1.0, 0.0]), &v(&[-1.0, 0.0, 0.0]), 1e-8).unwrap();
        assert_eq!(fd.sigma_term(&v(&[0.0, -4.0, 2.0])).unwrap(), 0.0);
    }
}
