//! Analysis requests and reports.

use std::collections::BTreeSet;
use std::fmt::{self, Write as _};
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::cone::face::Ambiguity;
use crate::error::{Error, Result};
use crate::multiplier::m_isolated_calmness_test;
use crate::perturbation::{
    equivalence_experiment, error_bound_probe, pseudo_isolated_probe, strong_calmness_probe, EquivalenceReport,
};
use crate::probe::{Growth, ProbeConfig, RatioStats};
use crate::problem::{ConicProgram, KktPoint, KKT_TOL};
use crate::problem_file::{parse_problem, ParsedProblem};
use crate::stability::{
    noncriticality_test, sigma_gamma_sign_probe, skkt_isolated_calmness_test, sosc_test, strong_calmness_sufficient,
    x_isolated_calmness_test, LadderReport, SignProbeResult, SkktVerdict, SoscResult, StabilityConfig,
    StabilityVerdict, Status,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Analysis {
    Noncritical,
    XIcalm,
    MIcalm,
    SkktIcalm,
    Sosc,
    Signcheck,
    Errorbound,
    Strongcalm,
    Pseudo,
    Equivalence,
    Ladder,
}

impl Analysis {
    pub const ALL: [Analysis; 11] = [
        Analysis::Noncritical,
        Analysis::XIcalm,
        Analysis::MIcalm,
        Analysis::SkktIcalm,
        Analysis::Sosc,
        Analysis::Signcheck,
        Analysis::Errorbound,
        Analysis::Strongcalm,
        Analysis::Pseudo,
        Analysis::Equivalence,
        Analysis::Ladder,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Analysis::Noncritical => "noncritical",
            Analysis::XIcalm => "x-icalm",
            Analysis::MIcalm => "m-icalm",
            Analysis::SkktIcalm => "skkt-icalm",
            Analysis::Sosc => "sosc",
            Analysis::Signcheck => "signcheck",
            Analysis::Errorbound => "errorbound",
            Analysis::Strongcalm => "strongcalm",
            Analysis::Pseudo => "pseudo",
            Analysis::Equivalence => "equivalence",
            Analysis::Ladder => "ladder",
        }
    }
}

impl fmt::Display for Analysis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Analysis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Analysis::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown analysis {s:?}")))
    }
}

/// Parses a comma-separated analysis list; `all` expands to every analysis.
pub fn parse_analyses(list: &str) -> Result<BTreeSet<Analysis>> {
    let mut out = BTreeSet::new();
    for item in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        if item == "all" {
            out.extend(Analysis::ALL);
        } else {
            out.insert(item.parse()?);
        }
    }
    if out.is_empty() {
        return Err(Error::Config("no analyses requested".into()));
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Text,
    Json,
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "text" => Ok(Format::Text),
            "json" => Ok(Format::Json),
            _ => Err(Error::Config(format!("unknown format {s:?} (expected text or json)"))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct AnalysisRequest {
    pub problem: PathBuf,
    pub point: String,
    pub analyses: BTreeSet<Analysis>,
    pub probe: ProbeConfig,
    pub stability: StabilityConfig,
    pub format: Format,
}

impl AnalysisRequest {
    /// A request with default configuration and every seed set to `seed`.
    pub fn new(problem: impl Into<PathBuf>, point: &str, analyses: BTreeSet<Analysis>, seed: u64) -> Self {
        AnalysisRequest {
            problem: problem.into(),
            point: point.into(),
            analyses,
            probe: ProbeConfig { seed, ..Default::default() },
            stability: StabilityConfig { seed, ..Default::default() },
            format: Format::Text,
        }
    }
}

/// An analysis error with the module and operation that raised it.
#[derive(Debug, thiserror::Error)]
#[error("{module}::{operation}: {error}")]
pub struct AnalysisFailure {
    pub module: &'static str,
    pub operation: &'static str,
    pub error: Error,
}

trait Context<T> {
    fn context(self, module: &'static str, operation: &'static str) -> Result<T, AnalysisFailure>;
}

impl<T> Context<T> for Result<T> {
    fn context(self, module: &'static str, operation: &'static str) -> Result<T, AnalysisFailure> {
        self.map_err(|error| AnalysisFailure { module, operation, error })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub kkt: f64,
    pub witness: f64,
    pub sosc_margin: f64,
    pub tol_den: f64,
    pub growth_threshold: f64,
}

/// Cross-analysis agreement checks; `None` when an input was not requested.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Consistency {
    pub skkt_routes: Option<bool>,
    pub error_bound_vs_strong: Option<bool>,
    pub strong_vs_pseudo_and_m: Option<bool>,
    /// Bounded pseudo-isolated ratios come with a noncritical multiplier.
    pub pseudo_implies_noncritical: Option<bool>,
}

impl Consistency {
    pub fn all_ok(&self) -> bool {
        [self.skkt_routes, self.error_bound_vs_strong, self.strong_vs_pseudo_and_m, self.pseudo_implies_noncritical]
            .iter()
            .all(|c| c.unwrap_or(true))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub problem: String,
    pub point: String,
    pub seed: u64,
    pub analyses: Vec<Analysis>,
    pub tolerances: Tolerances,
    pub probe_config: ProbeConfig,
    pub stability_config: StabilityConfig,
    pub x: Vec<f64>,
    pub lambda: Vec<f64>,
    pub kkt_residual: f64,
    pub ambiguities: Vec<Ambiguity>,
    pub noncritical: Option<StabilityVerdict>,
    pub x_isolated: Option<StabilityVerdict>,
    pub m_isolated: Option<StabilityVerdict>,
    pub skkt_isolated: Option<SkktVerdict>,
    pub sosc: Option<SoscResult>,
    pub signcheck: Option<SignProbeResult>,
    pub error_bound: Option<RatioStats>,
    pub strong_calmness: Option<RatioStats>,
    pub pseudo_isolated: Option<RatioStats>,
    pub equivalence: Option<EquivalenceReport>,
    pub ladder: Option<LadderReport>,
    pub consistency: Consistency,
}

impl StabilityReport {
    /// Any `Fails` verdict carrying a certificate.
    pub fn has_certified_failure(&self) -> bool {
        let fails = |v: &Option<StabilityVerdict>| v.as_ref().is_some_and(|v| v.status == Status::Fails);
        fails(&self.noncritical)
            || fails(&self.x_isolated)
            || fails(&self.m_isolated)
            || self.skkt_isolated.as_ref().is_some_and(|s| s.direct.status == Status::Fails)
            || self.sosc.as_ref().is_some_and(|s| s.status == Status::Fails)
            || self.signcheck.as_ref().is_some_and(|s| s.gamma.falsified || s.gamma_tilde.falsified)
    }
}

/// Loads the problem and validates the point; failures here are input errors.
pub fn load(request: &AnalysisRequest) -> Result<(ParsedProblem, KktPoint)> {
    let parsed = parse_problem(&request.problem)?;
    let point = parsed.kkt_point(&request.point)?;
    Ok((parsed, point))
}

pub fn run_analysis(request: &AnalysisRequest) -> Result<StabilityReport, AnalysisFailure> {
    let (parsed, point) = load(request).context("problem_model", "parse_problem")?;
    analyze_point(&parsed.program, &point, request)
}

/// Runs the requested analyses on an already validated point.
pub fn analyze_point(
    prog: &ConicProgram,
    point: &KktPoint,
    request: &AnalysisRequest,
) -> Result<StabilityReport, AnalysisFailure> {
    let want = |a: Analysis| request.analyses.contains(&a);
    let (pc, sc) = (&request.probe, &request.stability);
    pc.validate().context("perturbation_lab", "probe_config")?;

    let noncritical = want(Analysis::Noncritical)
        .then(|| noncriticality_test(prog, point, sc))
        .transpose()
        .context("stability_tests", "noncriticality_test")?;
    let x_isolated = want(Analysis::XIcalm)
        .then(|| x_isolated_calmness_test(prog, point, sc))
        .transpose()
        .context("stability_tests", "x_isolated_calmness_test")?;
    let m_isolated = want(Analysis::MIcalm)
        .then(|| m_isolated_calmness_test(prog, point, sc))
        .transpose()
        .context("multiplier_geometry", "m_isolated_calmness_test")?;
    let skkt_isolated = want(Analysis::SkktIcalm)
        .then(|| skkt_isolated_calmness_test(prog, point, sc))
        .transpose()
        .context("stability_tests", "skkt_isolated_calmness_test")?;
    let sosc = want(Analysis::Sosc).then(|| sosc_test(prog, point, sc)).transpose().context("stability_tests", "sosc_test")?;
    let signcheck = want(Analysis::Signcheck)
        .then(|| sigma_gamma_sign_probe(prog, point, sc))
        .transpose()
        .context("stability_tests", "sigma_gamma_sign_probe")?;
    let equivalence = want(Analysis::Equivalence)
        .then(|| equivalence_experiment(prog, point, pc))
        .transpose()
        .context("perturbation_lab", "equivalence_experiment")?;
    // The equivalence experiment already ran the individual probes.
    let reuse = |pick: fn(&EquivalenceReport) -> &RatioStats| equivalence.as_ref().map(|e| pick(e).clone());
    let error_bound = match want(Analysis::Errorbound) {
        false => None,
        true => match reuse(|e| &e.error_bound) {
            Some(s) => Some(s),
            None => Some(error_bound_probe(prog, point, pc).context("perturbation_lab", "error_bound_probe")?),
        },
    };
    let strong_calmness = match want(Analysis::Strongcalm) {
        false => None,
        true => match reuse(|e| &e.strong_calmness) {
            Some(s) => Some(s),
            None => Some(strong_calmness_probe(prog, point, pc).context("perturbation_lab", "strong_calmness_probe")?),
        },
    };
    let pseudo_isolated = match want(Analysis::Pseudo) {
        false => None,
        true => match reuse(|e| &e.pseudo_isolated) {
            Some(s) => Some(s),
            None => Some(pseudo_isolated_probe(prog, point, pc).context("perturbation_lab", "pseudo_isolated_probe")?),
        },
    };
    let ladder = want(Analysis::Ladder)
        .then(|| strong_calmness_sufficient(prog, point, sc, pc))
        .transpose()
        .context("stability_tests", "strong_calmness_sufficient")?;

    let bounded = |s: &RatioStats| s.classification == Growth::Bounded;
    let pseudo_any = pseudo_isolated.as_ref().or(equivalence.as_ref().map(|e| &e.pseudo_isolated));
    let consistency = Consistency {
        skkt_routes: skkt_isolated.as_ref().map(|s| s.consistent),
        error_bound_vs_strong: equivalence.as_ref().map(|e| e.error_bound_vs_strong).or_else(|| {
            Some(bounded(error_bound.as_ref()?) == bounded(strong_calmness.as_ref()?))
        }),
        strong_vs_pseudo_and_m: equivalence.as_ref().map(|e| e.strong_vs_pseudo_and_m),
        pseudo_implies_noncritical: match (pseudo_any, &noncritical) {
            (Some(p), Some(nc)) => Some(!bounded(p) || nc.status != Status::Fails),
            _ => None,
        },
    };

    Ok(StabilityReport {
        problem: request.problem.display().to_string(),
        point: request.point.clone(),
        seed: pc.seed,
        analyses: request.analyses.iter().copied().collect(),
        tolerances: Tolerances {
            kkt: KKT_TOL,
            witness: sc.tol,
            sosc_margin: sc.sosc_margin,
            tol_den: pc.tol_den,
            growth_threshold: pc.growth_threshold,
        },
        probe_config: pc.clone(),
        stability_config: sc.clone(),
        x: point.x.iter().copied().collect(),
        lambda: point.lambda.iter().copied().collect(),
        kkt_residual: point.residual(),
        ambiguities: point.face.ambiguities().to_vec(),
        noncritical,
        x_isolated,
        m_isolated,
        skkt_isolated,
        sosc,
        signcheck,
        error_bound,
        strong_calmness,
        pseudo_isolated,
        equivalence,
        ladder,
        consistency,
    })
}

fn verdict_line(v: &StabilityVerdict) -> String {
    let mut s = format!("{:?}", v.status);
    if let Some(w) = &v.witness {
        let _ = write!(s, " xi={:?} v={:?}", w.xi, w.v);
    }
    if let Some(r) = v.residual {
        let _ = write!(s, " residual={r:.2e}");
    }
    let _ = write!(s, " [{:?}{}]", v.method, if v.exact { ", exact" } else { "" });
    s
}

fn ratio_line(s: &RatioStats) -> String {
    let maxima: Vec<String> = s.per_radius.iter().map(|r| format!("{:.3e}", r.max)).collect();
    format!("{:?} growth={:.2}x/decade max=[{}]", s.classification, s.growth_per_decade, maxima.join(", "))
}

fn flag(b: Option<bool>) -> &'static str {
    match b {
        None => "n/a",
        Some(true) => "ok",
        Some(false) => "VIOLATED",
    }
}

pub fn emit_report(report: &StabilityReport, format: Format) -> String {
    match format {
        Format::Json => {
            let mut s = serde_json::to_string_pretty(report).expect("report serializes");
            s.push('\n');
            s
        }
        Format::Text => emit_text(report),
    }
}

fn emit_text(r: &StabilityReport) -> String {
    let mut rows: Vec<(String, String)> = Vec::new();
    let mut row = |k: &str, v: String| rows.push((k.to_string(), v));
    row("point", format!("{} x={:?} lambda={:?}", r.point, r.x, r.lambda));
    row("kkt residual", format!("{:.2e}", r.kkt_residual));
    if let Some(v) = &r.noncritical {
        row("noncritical", verdict_line(v));
    }
    if let Some(v) = &r.x_isolated {
        row("x-icalm", verdict_line(v));
    }
    if let Some(v) = &r.m_isolated {
        row("m-icalm", verdict_line(v));
    }
    if let Some(v) = &r.skkt_isolated {
        row("skkt-icalm", verdict_line(&v.direct));
    }
    if let Some(s) = &r.sosc {
        let v = match (s.vacuous, s.min_value) {
            (true, _) => "Holds (critical cone is {0})".to_string(),
            (false, Some(q)) => format!("{:?} min={q:.6e}", s.status),
            (false, None) => format!("{:?}", s.status),
        };
        row("sosc", v);
    }
    if let Some(s) = &r.signcheck {
        let c = |c: &crate::stability::SignCheck| match (c.falsified, c.min_product) {
            (true, Some(p)) => format!("falsified (product {p:.3e})"),
            (false, Some(p)) => format!("not falsified (min {p:.3e}, {} feasible)", c.feasible),
            _ => "not falsified (no feasible samples)".into(),
        };
        row("signcheck gamma", c(&s.gamma));
        row("signcheck gamma~", c(&s.gamma_tilde));
    }
    if let Some(s) = &r.error_bound {
        row("errorbound", ratio_line(s));
    }
    if let Some(s) = &r.strong_calmness {
        row("strongcalm", ratio_line(s));
    }
    if let Some(s) = &r.pseudo_isolated {
        row("pseudo", ratio_line(s));
    }
    if let Some(e) = &r.equivalence {
        row("m-calm", ratio_line(&e.m_calmness));
        row("equivalence", if e.consistent() { "consistent".into() } else { e.violations.join("; ") });
    }
    if let Some(l) = &r.ladder {
        for link in &l.links {
            let h = if link.heuristic { " (heuristic)" } else { "" };
            row(&format!("ladder {}", link.name), format!("{:?}{h}: {}", link.status, link.detail));
        }
        row("ladder", l.conclusion.clone());
    }
    let c = &r.consistency;
    row(
        "consistency",
        format!(
            "skkt routes {}, error bound/strong {}, strong/pseudo+M {}, pseudo=>noncritical {}",
            flag(c.skkt_routes),
            flag(c.error_bound_vs_strong),
            flag(c.strong_vs_pseudo_and_m),
            flag(c.pseudo_implies_noncritical)
        ),
    );
    let width = rows.iter().map(|(k, _)| k.chars().count()).max().unwrap_or(0);
    let mut out = format!("{} (seed {})\n", r.problem, r.seed);
    for (k, v) in rows {
        let _ = writeln!(out, "  {k:<width$}  {v}");
    }
    out
}

/// Parses a machine-format report.
pub fn parse_report(text: &str) -> Result<StabilityReport> {
    serde_json::from_str(text).map_err(|e| Error::Parse(format!("report: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn analysis_names() {
        let all = parse_analyses("all").unwrap();
        assert_eq!(all.len(), 11);
        let some = parse_analyses("sosc, noncritical").unwrap();
        assert_eq!(some.into_iter().collect::<Vec<_>>(), vec![Analysis::Noncritical, Analysis::Sosc]);
        assert!(parse_analyses("noncritical,bogus").is_err());
        assert!(parse_analyses("").is_err());
        for a in Analysis::ALL {
            assert_eq!(a.name().parse::<Analysis>().unwrap(), a);
            let json = serde_json::to_string(&a).unwrap();
            assert_eq!(json, format!("\"{}\"", a.name()));
        }
    }
}
