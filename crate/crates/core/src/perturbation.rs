//! Perturbed KKT systems: the reverse construction of solvable
//! perturbations, a semismooth Newton solver, and the ratio probes behind
//! the error-bound and strong-calmness comparisons.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{concat, damped_least_squares, Matrix, Vector};
use crate::multiplier::{calmness_probe_m, dist_to_multiplier_set, MultiplierSetRef};
use crate::probe::{self, Growth, ProbeConfig, RatioStats, Sample};
use crate::problem::{ConicProgram, KktPoint};
use crate::sampling::uniform_shell;

/// A perturbation `(a, b)` together with a KKT pair `(x, λ)` of the
/// perturbed system.
#[derive(Clone, Debug, PartialEq)]
pub struct ReversePerturbation {
    pub a: Vector,
    pub b: Vector,
    pub x: Vector,
    pub lambda: Vector,
}

/// With `â = ∇ₓL(x, λ)` and `b = g(x) − Π_K(g(x) + λ)`, the pair
/// `(x, λ + b)` solves the system perturbed by `(â + ∇g(x)b, b)`.
pub fn reverse_perturbation(prog: &ConicProgram, x: &Vector, lambda: &Vector) -> Result<ReversePerturbation> {
    let gx = prog.g(x)?;
    let b = &gx - prog.cone().project(&(&gx + lambda))?;
    let a = prog.lagrangian_grad(x, lambda)? + prog.jac_g(x)?.transpose() * &b;
    let lambda = lambda + &b;
    Ok(ReversePerturbation { a, b, x: x.clone(), lambda })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub max_iter: usize,
    pub tol: f64,
    /// Residual decrease below which a window of iterations counts as stagnation.
    pub stagnation: f64,
    pub stagnation_window: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig { max_iter: 200, tol: 1e-10, stagnation: 1e-14, stagnation_window: 10 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Solution {
    pub x: Vector,
    pub lambda: Vector,
    pub iterations: usize,
    pub residual: f64,
    pub trace: Vec<f64>,
}

fn natural_residual(prog: &ConicProgram, x: &Vector, lambda: &Vector, a: &Vector, b: &Vector) -> Result<Vector> {
    let (r1, r2) = prog.kkt_residual(x, lambda, a, b)?;
    Ok(concat(&r1, &r2))
}

/// Semismooth Newton on the natural residual
/// `(∇ₓL(x, λ) − a, g(x) − b − Π_K(g(x) − b + λ))`, with Levenberg–Marquardt
/// damping when the Newton step does not decrease the residual.
pub fn solve_perturbed_kkt(
    prog: &ConicProgram,
    a: &Vector,
    b: &Vector,
    start: (&Vector, &Vector),
    cfg: &SolverConfig,
) -> Result<Solution> {
    let (n, m) = (prog.n(), prog.m());
    let mut x = start.0.clone();
    let mut lambda = start.1.clone();
    let mut f = natural_residual(prog, &x, &lambda, a, b)?;
    let mut trace = vec![f.norm()];
    for it in 0..cfg.max_iter {
        let res = f.norm();
        if res <= cfg.tol {
            return Ok(Solution { x, lambda, iterations: it, residual: res, trace });
        }
        if trace.len() > cfg.stagnation_window {
            let old = trace[trace.len() - 1 - cfg.stagnation_window];
            if old - res < cfg.stagnation {
                return Err(Error::SolverFailed { iterations: it, residual: res, reason: "stagnation".into() });
            }
        }
        let gx = prog.g(&x)?;
        let gp = prog.cone().projection_jacobian(&(&gx - b + &lambda))?;
        let jg = prog.jac_g(&x)?;
        let mut jac = Matrix::zeros(n + m, n + m);
        jac.view_mut((0, 0), (n, n)).copy_from(&prog.lagrangian_hessian(&x, &lambda)?);
        jac.view_mut((0, n), (n, m)).copy_from(&jg.transpose());
        jac.view_mut((n, 0), (m, n)).copy_from(&((Matrix::identity(m, m) - &gp) * &jg));
        jac.view_mut((n, n), (m, m)).copy_from(&(-&gp));

        let newton = jac.clone().lu().solve(&(-&f));
        let mut mu = 0.0;
        let mut accepted = false;
        for attempt in 0..12 {
            let step = match (&newton, attempt) {
                (Some(s), 0) if s.iter().all(|v| v.is_finite()) => s.clone(),
                _ => {
                    mu = if mu == 0.0 { 1e-6 * (1.0 + res) } else { mu * 10.0 };
                    damped_least_squares(&jac, &(-&f), mu)
                }
            };
            let mut t = 1.0;
            for _ in 0..30 {
                let xt = &x + step.rows(0, n) * t;
                let lt = &lambda + step.rows(n, m) * t;
                let ft = natural_residual(prog, &xt, &lt, a, b)?;
                if ft.norm() <= (1.0 - 1e-4 * t) * res {
                    x = xt;
                    lambda = lt;
                    f = ft;
                    accepted = true;
                    break;
                }
                t *= 0.5;
            }
            if accepted {
                break;
            }
        }
        trace.push(f.norm());
        if !accepted {
            return Err(Error::SolverFailed { iterations: it + 1, residual: res, reason: "line search failed".into() });
        }
    }
    let res = f.norm();
    if res <= cfg.tol {
        Ok(Solution { x, lambda, iterations: cfg.max_iter, residual: res, trace })
    } else {
        Err(Error::SolverFailed { iterations: cfg.max_iter, residual: res, reason: "iteration limit".into() })
    }
}

fn sample_pair(point: &KktPoint, radius: f64, rng: &mut crate::sampling::SampleRng) -> (Vector, Vector) {
    let (n, m) = (point.x.len(), point.lambda.len());
    let w = uniform_shell(rng, n + m, radius);
    (&point.x + w.rows(0, n), &point.lambda + w.rows(n, m))
}

fn flat(x: &Vector, lambda: &Vector) -> Vec<f64> {
    x.iter().chain(lambda.iter()).copied().collect()
}

/// Samples `(x, λ)` near `(x̄, λ̄)` and records
/// `(‖x − x̄‖ + dist(λ, M)) / ‖(r₁, r₂)‖` for the unperturbed residual.
pub fn error_bound_probe(prog: &ConicProgram, point: &KktPoint, config: &ProbeConfig) -> Result<RatioStats> {
    config.validate()?;
    let mref = MultiplierSetRef::new(prog, point)?;
    let (zn, zm) = (Vector::zeros(prog.n()), Vector::zeros(prog.m()));
    Ok(probe::run(config, |radius, rng| {
        let (x, lambda) = sample_pair(point, radius, rng);
        let Ok(r) = natural_residual(prog, &x, &lambda, &zn, &zm) else { return Sample::Failed };
        let den = r.norm();
        if den < config.tol_den {
            return Sample::Degenerate;
        }
        match dist_to_multiplier_set(&mref, &lambda) {
            Ok((d, _)) => Sample::Ratio { value: ((&x - &point.x).norm() + d) / den, point: flat(&x, &lambda) },
            Err(_) => Sample::Failed,
        }
    }))
}

/// How perturbations are generated for the strong-calmness style probes.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PerturbationSource {
    /// Sample `(x, λ)` and build `(a, b)` by [`reverse_perturbation`].
    #[default]
    Reverse,
    /// Sample `(a, b)` directly and solve from `(x̄, λ̄)`.
    Direct,
}

/// Solutions of the direct route farther than this from the reference are
/// discarded as belonging to another branch.
const DIRECT_LOCALITY: f64 = 1.0;

#[derive(Clone, Copy)]
enum Numerator {
    Full,
    PrimalOnly,
}

fn perturbed_probe(
    prog: &ConicProgram,
    point: &KktPoint,
    config: &ProbeConfig,
    source: PerturbationSource,
    numerator: Numerator,
) -> Result<RatioStats> {
    config.validate()?;
    let mref = MultiplierSetRef::new(prog, point)?;
    let solver = SolverConfig { max_iter: config.solver_max_iter, ..Default::default() };
    let (n, m) = (prog.n(), prog.m());
    Ok(probe::run(config, |radius, rng| {
        let (a, b, x, lambda) = match source {
            PerturbationSource::Reverse => {
                let (x, l) = sample_pair(point, radius, rng);
                match reverse_perturbation(prog, &x, &l) {
                    Ok(rp) => (rp.a, rp.b, rp.x, rp.lambda),
                    Err(_) => return Sample::Failed,
                }
            }
            PerturbationSource::Direct => {
                let w = uniform_shell(rng, n + m, radius);
                let (a, b) = (w.rows(0, n).clone_owned(), w.rows(n, m).clone_owned());
                match solve_perturbed_kkt(prog, &a, &b, (&point.x, &point.lambda), &solver) {
                    Ok(s) => {
                        let far = (&s.x - &point.x).norm() + (&s.lambda - &point.lambda).norm();
                        if far > DIRECT_LOCALITY {
                            return Sample::Failed;
                        }
                        (a, b, s.x, s.lambda)
                    }
                    Err(_) => return Sample::Failed,
                }
            }
        };
        let den = concat(&a, &b).norm();
        if den < config.tol_den {
            return Sample::Degenerate;
        }
        let dx = (&x - &point.x).norm();
        let num = match numerator {
            Numerator::PrimalOnly => dx,
            Numerator::Full => match dist_to_multiplier_set(&mref, &lambda) {
                Ok((d, _)) => dx + d,
                Err(_) => return Sample::Failed,
            },
        };
        Sample::Ratio { value: num / den, point: flat(&x, &lambda) }
    }))
}

/// `(‖x − x̄‖ + dist(λ, M)) / ‖(a, b)‖` over KKT pairs of perturbed systems
/// near `(x̄, λ̄)`.
pub fn strong_calmness_probe(prog: &ConicProgram, point: &KktPoint, config: &ProbeConfig) -> Result<RatioStats> {
    perturbed_probe(prog, point, config, PerturbationSource::Reverse, Numerator::Full)
}

pub fn strong_calmness_probe_with(
    prog: &ConicProgram,
    point: &KktPoint,
    config: &ProbeConfig,
    source: PerturbationSource,
) -> Result<RatioStats> {
    perturbed_probe(prog, point, config, source, Numerator::Full)
}

/// As [`strong_calmness_probe`] with numerator `‖x − x̄‖`.
pub fn pseudo_isolated_probe(prog: &ConicProgram, point: &KktPoint, config: &ProbeConfig) -> Result<RatioStats> {
    perturbed_probe(prog, point, config, PerturbationSource::Reverse, Numerator::PrimalOnly)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceReport {
    pub error_bound: RatioStats,
    pub strong_calmness: RatioStats,
    pub pseudo_isolated: RatioStats,
    pub m_calmness: RatioStats,
    /// Error bound and strong calmness classified alike.
    pub error_bound_vs_strong: bool,
    /// Strong calmness classified as pseudo-isolated calmness ∧ M-calmness.
    pub strong_vs_pseudo_and_m: bool,
    pub violations: Vec<String>,
}

impl EquivalenceReport {
    pub fn consistent(&self) -> bool {
        self.error_bound_vs_strong && self.strong_vs_pseudo_and_m
    }
}

fn describe(name: &str, s: &RatioStats) -> String {
    let maxima: Vec<String> = s.per_radius.iter().map(|r| format!("{:.3e}@{:.0e}", r.max, r.radius)).collect();
    format!("{name} {:?} (growth {:.2}x/decade; max {})", s.classification, s.growth_per_decade, maxima.join(", "))
}

/// Runs all four probes and checks both truth tables.
pub fn equivalence_experiment(prog: &ConicProgram, point: &KktPoint, config: &ProbeConfig) -> Result<EquivalenceReport> {
    let error_bound = error_bound_probe(prog, point, config)?;
    let strong_calmness = strong_calmness_probe(prog, point, config)?;
    let pseudo_isolated = pseudo_isolated_probe(prog, point, config)?;
    let m_calmness = calmness_probe_m(&MultiplierSetRef::new(prog, point)?, config)?;
    let bounded = |s: &RatioStats| s.classification == Growth::Bounded;

    let error_bound_vs_strong = bounded(&error_bound) == bounded(&strong_calmness);
    let strong_vs_pseudo_and_m = bounded(&strong_calmness) == (bounded(&pseudo_isolated) && bounded(&m_calmness));
    let mut violations = Vec::new();
    if !error_bound_vs_strong {
        violations.push(format!(
            "error bound vs strong calmness: {}; {}",
            describe("error bound", &error_bound),
            describe("strong calmness", &strong_calmness)
        ));
    }
    if !strong_vs_pseudo_and_m {
        violations.push(format!(
            "strong calmness vs pseudo-isolated ∧ M-calm: {}; {}; {}",
            describe("strong calmness", &strong_calmness),
            describe("pseudo-isolated", &pseudo_isolated),
            describe("M-calmness", &m_calmness)
        ));
    }
    Ok(EquivalenceReport {
        error_bound,
        strong_calmness,
        pseudo_isolated,
        m_calmness,
        error_bound_vs_strong,
        strong_vs_pseudo_and_m,
        violations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem_file::corpus_problem;

    fn v(x: &[f64]) -> Vector {
        Vector::from_row_slice(x)
    }

    #[test]
    fn reverse_on_p1() {
        let p = corpus_problem("p1").unwrap();
        let rp = reverse_perturbation(&p.program, &v(&[0.1]), &v(&[1.0])).unwrap();
        assert!((rp.a[0] - 0.302).abs() < 1e-15);
        assert!((rp.b[0] - 0.01).abs() < 1e-15);
        assert!((rp.lambda[0] - 1.01).abs() < 1e-15);
        let r = natural_residual(&p.program, &rp.x, &rp.lambda, &rp.a, &rp.b).unwrap();
        assert!(r.norm() < 1e-15);
    }

    #[test]
    fn reverse_at_kkt_point_is_trivial() {
        let p = corpus_problem("p2").unwrap();
        let k = p.kkt_point("lambda1").unwrap();
        let rp = reverse_perturbation(&p.program, &k.x, &k.lambda).unwrap();
        assert_eq!(rp.a.norm() + rp.b.norm(), 0.0);
        assert_eq!(rp.lambda, k.lambda);
    }

    #[test]
    fn newton_on_p1() {
        let p = corpus_problem("p1").unwrap();
        let s = solve_perturbed_kkt(&p.program, &v(&[0.0]), &v(&[0.01]), (&v(&[0.05]), &v(&[1.0])), &SolverConfig::default())
            .unwrap();
        assert!((s.x[0] - 0.1).abs() < 1e-10 && (s.lambda[0] + 0.5).abs() < 1e-9, "{s:?}");
        assert!(s.residual <= 1e-10);
    }

    #[test]
    fn newton_returns_kkt_start() {
        let p = corpus_problem("p3").unwrap();
        let k = p.kkt_point("unique").unwrap();
        let z = Vector::zeros(2);
        let s = solve_perturbed_kkt(&p.program, &z, &z, (&k.x, &k.lambda), &SolverConfig::default()).unwrap();
        assert_eq!(s.iterations, 0);
        assert_eq!(s.x, k.x);
    }

    #[test]
    fn newton_on_p3() {
        let p = corpus_problem("p3").unwrap();
        let k = p.kkt_point("unique").unwrap();
        let s = solve_perturbed_kkt(&p.program, &v(&[0.01, 0.0]), &v(&[0.0, 0.0]), (&k.x, &k.lambda), &SolverConfig::default())
            .unwrap();
        assert!(s.x.norm() < 1e-9);
        assert!((&s.lambda - v(&[-0.99, 0.0])).norm() < 1e-9);
    }

    #[test]
    fn p1_error_bound_shapes() {
        let cfg = ProbeConfig { samples: 2000, seed: 1, ..Default::default() };
        let p = corpus_problem("p1").unwrap();
        let crit = error_bound_probe(&p.program, &p.kkt_point("critical").unwrap(), &cfg).unwrap();
        assert_eq!(crit.classification, Growth::Diverging);
        let nc = error_bound_probe(&p.program, &p.kkt_point("noncritical").unwrap(), &cfg).unwrap();
        assert_eq!(nc.classification, Growth::Bounded);
        for r in &nc.per_radius {
            assert!((r.max - 1.0 / 3.0).abs() < 0.01, "{r:?}");
        }
    }

    #[test]
    fn equivalence_on_p1_and_p3() {
        let cfg = ProbeConfig { samples: 500, seed: 2, ..Default::default() };
        for (f, pt) in [("p1", "critical"), ("p1", "noncritical"), ("p3", "unique")] {
            let p = corpus_problem(f).unwrap();
            let r = equivalence_experiment(&p.program, &p.kkt_point(pt).unwrap(), &cfg).unwrap();
            assert!(r.consistent(), "{f} {pt}: {:?}", r.violations);
        }
    }
}
