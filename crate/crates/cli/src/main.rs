use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context as _;
use calmkit::multiplier::{calmness_probe_m, subregularity_probe, MultiplierSetRef};
use calmkit::perturbation::{error_bound_probe, pseudo_isolated_probe, strong_calmness_probe_with, PerturbationSource};
use calmkit::problem::derivative_selfcheck;
use calmkit::problem_file::{corpus_problem, parse_problem, CORPUS};
use calmkit::report::{emit_report, parse_analyses, run_analysis, AnalysisFailure, AnalysisRequest, Format};
use calmkit::stability::{noncriticality_test, Status};
use calmkit::{Error, Method, ProbeConfig, RatioStats, StabilityConfig};
use clap::{Args, Parser, Subcommand, ValueEnum};

const EXIT_USAGE: u8 = 1;
const EXIT_PARSE: u8 = 2;
const EXIT_INCONSISTENT: u8 = 3;
const EXIT_STRICT: u8 = 4;

#[derive(Parser)]
#[command(name = "calmkit", version, about = "Stability analysis of KKT points of conic programs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run stability analyses at a named point of a problem file.
    Analyze(AnalyzeArgs),
    /// Run a single ratio probe.
    Probe(ProbeArgs),
    /// List or write out the built-in problems.
    Corpus {
        #[command(subcommand)]
        action: CorpusAction,
    },
    /// Derivative and verdict checks on the built-in problems.
    Selfcheck,
}

#[derive(Subcommand)]
enum CorpusAction {
    List,
    Emit { dir: PathBuf },
}

#[derive(Args)]
struct Common {
    file: PathBuf,
    #[arg(long)]
    point: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Comma-separated, strictly decreasing.
    #[arg(long, value_delimiter = ',')]
    radii: Option<Vec<f64>>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    tol_den: Option<f64>,
    #[arg(long)]
    growth_threshold: Option<f64>,
    #[arg(long, value_enum, default_value_t = FormatArg::Text)]
    format: FormatArg,
}

impl Common {
    fn probe_config(&self) -> ProbeConfig {
        let mut c = ProbeConfig { seed: self.seed, ..Default::default() };
        if let Some(r) = &self.radii {
            c.radii = r.clone();
        }
        if let Some(s) = self.samples {
            c.samples = s;
        }
        if let Some(t) = self.tol_den {
            c.tol_den = t;
        }
        if let Some(g) = self.growth_threshold {
            c.growth_threshold = g;
        }
        c
    }
}

#[derive(Args)]
struct AnalyzeArgs {
    #[command(flatten)]
    common: Common,
    /// Comma-separated analysis names.
    #[arg(long, conflicts_with = "all")]
    analyses: Option<String>,
    #[arg(long)]
    all: bool,
    #[arg(long, value_enum, default_value_t = MethodArg::Auto)]
    method: MethodArg,
    #[arg(long)]
    starts: Option<usize>,
    /// Witness residual tolerance.
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    sosc_margin: Option<f64>,
    #[arg(long)]
    sign_samples: Option<usize>,
    /// Exit nonzero when any verdict fails with a certificate.
    #[arg(long)]
    strict: bool,
}

#[derive(Args)]
struct ProbeArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_enum)]
    kind: ProbeKind,
    #[arg(long, value_enum, default_value_t = SourceArg::Reverse)]
    source: SourceArg,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Text,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Auto,
    FaceEnum,
    Multistart,
}

#[derive(Clone, Copy, ValueEnum)]
enum ProbeKind {
    Errorbound,
    Strongcalm,
    Pseudo,
    Mcalm,
    Subregularity,
}

#[derive(Clone, Copy, ValueEnum)]
enum SourceArg {
    Reverse,
    Direct,
}

/// An error paired with the exit code it maps to.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl Failure {
    fn new(code: u8, error: impl Into<anyhow::Error>) -> Self {
        Failure { code, error: error.into() }
    }
}

fn code_for(e: &Error) -> u8 {
    match e {
        Error::Config(_) => EXIT_USAGE,
        Error::Parse(_) | Error::NotKkt { .. } | Error::DimensionMismatch { .. } | Error::SelfCheck { .. } => {
            EXIT_PARSE
        }
        _ => EXIT_INCONSISTENT,
    }
}

fn analysis_failure(f: AnalysisFailure) -> Failure {
    let code = match (&f.error, f.module) {
        (Error::Config(_), _) => EXIT_USAGE,
        (_, "problem_model") => EXIT_PARSE,
        (e, _) => code_for(e),
    };
    Failure::new(code, f)
}

fn analyze(args: &AnalyzeArgs) -> Result<u8, Failure> {
    let analyses = match (&args.analyses, args.all) {
        (_, true) => parse_analyses("all"),
        (Some(list), false) => parse_analyses(list),
        (None, false) => parse_analyses("noncritical"),
    }
    .map_err(|e| Failure::new(EXIT_USAGE, e))?;
    let c = &args.common;
    let mut stability = StabilityConfig { seed: c.seed, ..Default::default() };
    stability.method = match args.method {
        MethodArg::Auto => Method::Auto,
        MethodArg::FaceEnum => Method::FaceEnum,
        MethodArg::Multistart => Method::Multistart,
    };
    if let Some(s) = args.starts {
        stability.starts = s;
    }
    if let Some(t) = args.tol {
        stability.tol = t;
    }
    if let Some(m) = args.sosc_margin {
        stability.sosc_margin = m;
    }
    if let Some(s) = args.sign_samples {
        stability.sign_samples = s;
    }
    let format = format(c.format);
    let request = AnalysisRequest {
        problem: c.file.clone(),
        point: c.point.clone(),
        analyses,
        probe: c.probe_config(),
        stability,
        format,
    };
    let report = run_analysis(&request).map_err(analysis_failure)?;
    print!("{}", emit_report(&report, format));
    if !report.consistency.all_ok() {
        eprintln!("calmkit: consistency check violated: {:?}", report.consistency);
        return Ok(EXIT_INCONSISTENT);
    }
    if args.strict && report.has_certified_failure() {
        return Ok(EXIT_STRICT);
    }
    Ok(0)
}

fn format(f: FormatArg) -> Format {
    match f {
        FormatArg::Text => Format::Text,
        FormatArg::Json => Format::Json,
    }
}

fn probe(args: &ProbeArgs) -> Result<u8, Failure> {
    let c = &args.common;
    let parsed = parse_problem(&c.file).map_err(|e| Failure::new(EXIT_PARSE, e))?;
    let point = parsed.kkt_point(&c.point).map_err(|e| Failure::new(EXIT_PARSE, e))?;
    let cfg = c.probe_config();
    let prog = &parsed.program;
    let source = match args.source {
        SourceArg::Reverse => PerturbationSource::Reverse,
        SourceArg::Direct => PerturbationSource::Direct,
    };
    let stats: calmkit::Result<RatioStats> = match args.kind {
        ProbeKind::Errorbound => error_bound_probe(prog, &point, &cfg),
        ProbeKind::Strongcalm => strong_calmness_probe_with(prog, &point, &cfg, source),
        ProbeKind::Pseudo => pseudo_isolated_probe(prog, &point, &cfg),
        ProbeKind::Mcalm => MultiplierSetRef::new(prog, &point).and_then(|m| calmness_probe_m(&m, &cfg)),
        ProbeKind::Subregularity => subregularity_probe(prog, &point.x, &cfg),
    };
    let stats = stats.map_err(|e| Failure::new(code_for(&e), e))?;
    match c.format {
        FormatArg::Json => println!("{}", serde_json::to_string_pretty(&stats).expect("stats serialize")),
        FormatArg::Text => {
            println!("{:?} (growth {:.3}x per decade, seed {})", stats.classification, stats.growth_per_decade, stats.seed);
            println!("  {:>10}  {:>7}  {:>5}  {:>6}  {:>12}  {:>12}", "radius", "used", "degen", "failed", "max", "p99");
            for r in &stats.per_radius {
                println!(
                    "  {:>10.1e}  {:>7}  {:>5}  {:>6}  {:>12.4e}  {:>12.4e}",
                    r.radius, r.used, r.degenerate, r.failed, r.max, r.p99
                );
            }
        }
    }
    Ok(0)
}

fn corpus(action: &CorpusAction) -> Result<u8, Failure> {
    match action {
        CorpusAction::List => {
            for (name, _) in CORPUS {
                let p = corpus_problem(name).map_err(|e| Failure::new(EXIT_INCONSISTENT, e))?;
                let points: Vec<&str> = p.points.iter().map(|q| q.name.as_str()).collect();
                println!("{name}  n={} m={}  points: {}", p.program.n(), p.program.m(), points.join(", "));
            }
        }
        CorpusAction::Emit { dir } => {
            std::fs::create_dir_all(dir)
                .with_context(|| format!("creating {}", dir.display()))
                .map_err(|e| Failure::new(EXIT_USAGE, e))?;
            for (name, text) in CORPUS {
                let path = dir.join(name);
                std::fs::write(&path, text)
                    .with_context(|| format!("writing {}", path.display()))
                    .map_err(|e| Failure::new(EXIT_USAGE, e))?;
                println!("{}", path.display());
            }
        }
    }
    Ok(0)
}

fn selfcheck() -> Result<u8, Failure> {
    let mut ok = true;
    for (name, _) in CORPUS {
        let p = corpus_problem(name).map_err(|e| Failure::new(EXIT_INCONSISTENT, e))?;
        for pt in &p.points {
            let r = derivative_selfcheck(&p.program, &pt.x, 0);
            ok &= r.passed;
            println!(
                "{name} {:<12} derivatives {} (max rel error {:.1e} in {})",
                pt.name,
                if r.passed { "ok" } else { "FAILED" },
                r.max_rel_error,
                r.worst_component
            );
        }
    }
    let p = corpus_problem("p1").map_err(|e| Failure::new(EXIT_INCONSISTENT, e))?;
    for (pt, want) in [("critical", Status::Fails), ("noncritical", Status::Holds)] {
        let k = p.kkt_point(pt).map_err(|e| Failure::new(EXIT_INCONSISTENT, e))?;
        for method in [Method::FaceEnum, Method::Multistart] {
            let v = noncriticality_test(&p.program, &k, &StabilityConfig { method, ..Default::default() })
                .map_err(|e| Failure::new(EXIT_INCONSISTENT, e))?;
            let good = v.status == want;
            ok &= good;
            println!("p1.json {pt:<12} noncriticality {method:?}: {:?} {}", v.status, if good { "ok" } else { "FAILED" });
        }
    }
    Ok(if ok { 0 } else { EXIT_INCONSISTENT })
}

fn run(cli: &Cli) -> Result<u8, Failure> {
    match &cli.command {
        Command::Analyze(a) => analyze(a),
        Command::Probe(p) => probe(p),
        Command::Corpus { action } => corpus(action),
        Command::Selfcheck => selfcheck(),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("calmkit: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
