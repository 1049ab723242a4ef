//! Acceptance suite. Runs without the libtest harness so that every
//! criterion prints exactly one PASS/FAIL line.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use calmkit::cone::svec::svec;
use calmkit::cone::{FaceDescriptor, ProductCone, DEFAULT_TOL_RANK};
use calmkit::generate::polyhedral_instance;
use calmkit::linalg::concat;
use calmkit::multiplier::{calmness_probe_m, dist_to_multiplier_set, MultiplierSetRef};
use calmkit::perturbation::{error_bound_probe, pseudo_isolated_probe, reverse_perturbation, strong_calmness_probe};
use calmkit::problem_file::{corpus_problem, ParsedProblem, CORPUS};
use calmkit::sampling::{derived_rng, gaussian_vector, random_block, structured_point};
use calmkit::stability::{
    m_isolated_calmness_test, noncriticality_test, skkt_isolated_calmness_test, Status,
};
use calmkit::{Growth, KktPoint, Matrix, Method, ProbeConfig, StabilityConfig};
use rand::Rng;

type Outcome = Result<String, String>;

const KINDS: [(&str, usize); 5] =
    [("zero", 8), ("orthant_nonneg", 8), ("orthant_nonpos", 8), ("soc", 5), ("psd", 4)];

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn sample(kind: usize, seed: u64, index: u64) -> (ProductCone, Vec<calmkit::Vector>) {
    let mut r = derived_rng(seed, index);
    let (name, max) = KINDS[kind];
    let block = random_block(&mut r, name, max);
    let pts = (0..2).map(|_| structured_point(&mut r, &block)).collect();
    (ProductCone::single(block), pts)
}

fn corpus_points() -> Vec<(&'static str, ParsedProblem, KktPoint, String)> {
    let mut out = Vec::new();
    for (file, _) in CORPUS {
        let p = corpus_problem(file).unwrap();
        for pt in p.points.clone() {
            let k = p.kkt_point(&pt.name).unwrap();
            out.push((file, p.clone(), k, pt.name));
        }
    }
    out
}

fn cone_suite() -> Outcome {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for kind in 0..KINDS.len() {
        for i in 0..1000 {
            let (k, pts) = sample(kind, 1, i);
            let (z, w) = (&pts[0], &pts[1]);
            let p = k.project(z).unwrap();
            let q = k.project_polar_direct(z).unwrap();
            let scale = 1.0 + z.norm();
            let errs = [
                (&p + &q - z).norm() / scale,
                p.dot(&q).abs() / (scale * scale),
                k.violation(&p).unwrap().1 / scale,
                (k.project(&p).unwrap() - &p).norm() / scale,
                ((&p - k.project(w).unwrap()).norm() - (z - w).norm()).max(0.0),
            ];
            let e = errs.iter().cloned().fold(0.0, f64::max);
            worst = worst.max(e);
            check(e <= 1e-9, || format!("{} sample {i}: error {e:.2e}", KINDS[kind].0))?;
        }
    }
    let t = start.elapsed();
    check(t < Duration::from_secs(5), || format!("took {t:.2?}"))?;
    Ok(format!("5000 points, max error {worst:.1e}, {t:.2?}"))
}

fn dirderiv_fd() -> Outcome {
    let ts = [1e-3, 1e-4, 1e-5];
    let mut worst: f64 = 0.0;
    for kind in 0..KINDS.len() {
        for i in 0..200 {
            let (k, pts) = sample(kind, 2, i);
            let (z, h) = (&pts[0], &pts[1]);
            let d = k.proj_dirderiv(z, h).unwrap();
            let p = k.project(z).unwrap();
            let errs: Vec<f64> = ts
                .iter()
                .map(|&t| ((k.project(&(z + h * t)).unwrap() - &p) / t - &d).norm() / (1.0 + h.norm()))
                .collect();
            worst = worst.max(errs[2]);
            check(errs[2] < 1e-4, || format!("{} sample {i}: error {:.2e} at t=1e-5", KINDS[kind].0, errs[2]))?;
            // Rounding allows a tiny increase once the difference quotient is exact.
            let decreasing = errs.windows(2).all(|w| w[1] <= w[0] + 1e-9);
            check(decreasing, || format!("{} sample {i}: errors {errs:?} not decreasing", KINDS[kind].0))?;
        }
    }
    Ok(format!("1000 pairs, max error at t=1e-5 {worst:.1e}"))
}

fn graph_round_trip() -> Outcome {
    for kind in 0..KINDS.len() {
        for i in 0..500 {
            let (k, pts) = sample(kind, 3, i);
            let (z, w) = (&pts[0], &pts[1]);
            let y = k.project(z).unwrap();
            let mu = z - &y;
            let dy = k.proj_dirderiv(z, w).unwrap();
            let dlam = w - &dy;
            let fd = FaceDescriptor::new(&k, &y, &mu, DEFAULT_TOL_RANK).unwrap();
            let (a, b) = fd.graph_deriv_routes(&dy, &dlam, 1e-8).unwrap();
            check(a && b, || format!("{} sample {i}: routes ({a}, {b})", KINDS[kind].0))?;
        }
    }
    Ok("2500 pairs, both routes accept".into())
}

fn corpus_verdicts() -> Outcome {
    let cfg = StabilityConfig::default();
    let mut lines = Vec::new();
    let timed = |label: &str, f: &dyn Fn() -> Result<(), String>| -> Result<String, String> {
        let t = Instant::now();
        f()?;
        let e = t.elapsed();
        check(e < Duration::from_secs(10), || format!("{label} took {e:.2?}"))?;
        Ok(format!("{label} {e:.1?}"))
    };
    let status = |file: &str, pt: &str| {
        let p = corpus_problem(file).unwrap();
        let k = p.kkt_point(pt).unwrap();
        noncriticality_test(&p.program, &k, &cfg).unwrap()
    };
    lines.push(timed("P1 critical", &|| {
        let v = status("p1", "critical");
        let res = v.residual.unwrap_or(f64::INFINITY);
        check(v.status == Status::Fails && res <= 1e-8, || format!("P1 critical: {:?} residual {res:e}", v.status))
    })?);
    lines.push(timed("P1 noncritical", &|| {
        let v = status("p1", "noncritical");
        check(v.status == Status::Holds, || format!("P1 noncritical: {:?}", v.status))
    })?);
    for pt in ["lambda0", "lambda1", "lambda10"] {
        lines.push(timed(&format!("P2 {pt}"), &|| {
            let v = status("p2", pt);
            check(v.status == Status::Holds, || format!("P2 {pt}: {:?}", v.status))
        })?);
    }
    lines.push(timed("P3", &|| {
        let p = corpus_problem("p3").unwrap();
        let k = p.kkt_point("unique").unwrap();
        let s = skkt_isolated_calmness_test(&p.program, &k, &cfg).unwrap();
        let conj = s.m_isolated.status == Status::Holds && s.noncritical.status == Status::Holds;
        check(s.direct.status == Status::Holds && conj && s.consistent, || format!("P3: {s:?}"))
    })?);
    lines.push(timed("P4", &|| {
        let v = status("p4", "origin");
        check(v.status == Status::Holds, || format!("P4: {:?}", v.status))?;
        let p = corpus_problem("p4").unwrap();
        let k = p.kkt_point("origin").unwrap();
        let m = MultiplierSetRef::new(&p.program, &k).unwrap();
        let lam = svec(&Matrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, -3.0]));
        let d = dist_to_multiplier_set(&m, &lam).unwrap().0;
        check((d - 2f64.sqrt()).abs() <= 1e-8, || format!("P4 distance {d}"))
    })?);
    Ok(lines.join(", "))
}

fn face_enum_vs_multistart() -> Outcome {
    let mut instances = 0;
    let mut counts = [0usize; 3];
    for seed in 0..40u64 {
        let Ok((prog, k)) = polyhedral_instance(seed) else { continue };
        instances += 1;
        let exact = noncriticality_test(&prog, &k, &StabilityConfig { method: Method::FaceEnum, ..Default::default() })
            .map_err(|e| format!("instance {seed}: {e}"))?;
        counts[exact.status as usize] += 1;
        for s in 1..=10 {
            let cfg = StabilityConfig { method: Method::Multistart, seed: s, ..Default::default() };
            let v = noncriticality_test(&prog, &k, &cfg).map_err(|e| format!("instance {seed}: {e}"))?;
            check(v.status == exact.status, || {
                format!("instance {seed} seed {s}: multistart {:?}, face enumeration {:?}", v.status, exact.status)
            })?;
        }
    }
    check(instances >= 20, || format!("only {instances} instances generated"))?;
    Ok(format!("{instances} instances x 10 seeds agree ({} Holds, {} Fails)", counts[0], counts[1]))
}

fn divergence_detection() -> Outcome {
    let start = Instant::now();
    let p = corpus_problem("p1").unwrap();
    let cfg = ProbeConfig { radii: vec![1e-2, 1e-3, 1e-4], samples: 10_000, seed: 1, ..Default::default() };
    let mut out = Vec::new();
    for (pt, diverge) in [("critical", true), ("noncritical", false)] {
        let k = p.kkt_point(pt).unwrap();
        for (name, s) in [
            ("error bound", error_bound_probe(&p.program, &k, &cfg).unwrap()),
            ("strong calmness", strong_calmness_probe(&p.program, &k, &cfg).unwrap()),
        ] {
            let maxima: Vec<f64> = s.per_radius.iter().map(|r| r.max).collect();
            let (hi, lo) = (
                maxima.iter().cloned().fold(f64::MIN, f64::max),
                maxima.iter().cloned().fold(f64::MAX, f64::min),
            );
            if diverge {
                let g = maxima[2] / maxima[0];
                check(g >= 10.0, || format!("P1 {pt} {name}: growth {g:.2} ({maxima:?})"))?;
                out.push(format!("{pt} {name} x{g:.0}"));
            } else {
                check(lo > 0.0 && hi / lo < 2.0, || format!("P1 {pt} {name}: maxima {maxima:?}"))?;
                out.push(format!("{pt} {name} spread {:.2}", hi / lo));
            }
        }
    }
    let t = start.elapsed();
    check(t < Duration::from_secs(60), || format!("took {t:.2?}"))?;
    Ok(format!("{}, {t:.1?}", out.join(", ")))
}

fn error_bound_vs_strong() -> Outcome {
    let mut n = 0;
    for (file, p, k, pt) in corpus_points() {
        for seed in 1..=5 {
            let cfg = ProbeConfig { seed, ..Default::default() };
            let e = error_bound_probe(&p.program, &k, &cfg).unwrap().classification;
            let s = strong_calmness_probe(&p.program, &k, &cfg).unwrap().classification;
            check(e == s, || format!("{file} {pt} seed {seed}: error bound {e:?}, strong {s:?}"))?;
            n += 1;
        }
    }
    Ok(format!("{n} point/seed pairs agree"))
}

fn strong_vs_pseudo_and_m() -> Outcome {
    let cfg = ProbeConfig { seed: 1, ..Default::default() };
    let mut n = 0;
    for (file, p, k, pt) in corpus_points() {
        let s = strong_calmness_probe(&p.program, &k, &cfg).unwrap().classification;
        let ps = pseudo_isolated_probe(&p.program, &k, &cfg).unwrap().classification;
        let m = calmness_probe_m(&MultiplierSetRef::new(&p.program, &k).unwrap(), &cfg).unwrap().classification;
        let conj = if ps == Growth::Bounded && m == Growth::Bounded { Growth::Bounded } else { Growth::Diverging };
        check(s == conj, || format!("{file} {pt}: strong {s:?}, pseudo {ps:?}, M-calm {m:?}"))?;
        n += 1;
    }
    Ok(format!("{n} points agree"))
}

fn skkt_vs_conjunction() -> Outcome {
    let cfg = StabilityConfig::default();
    let mut n = 0;
    for (file, p, k, pt) in corpus_points() {
        let direct = skkt_isolated_calmness_test(&p.program, &k, &cfg)
            .map_err(|e| format!("{file} {pt}: {e}"))?
            .direct
            .status;
        let m = m_isolated_calmness_test(&p.program, &k, &cfg).unwrap().status;
        let nc = noncriticality_test(&p.program, &k, &cfg).unwrap().status;
        let conj = match (m, nc) {
            (Status::Holds, Status::Holds) => Status::Holds,
            (Status::Fails, _) | (_, Status::Fails) => Status::Fails,
            _ => Status::Inconclusive,
        };
        check(direct == conj, || format!("{file} {pt}: direct {direct:?}, M {m:?}, noncritical {nc:?}"))?;
        n += 1;
    }
    Ok(format!("{n} points agree"))
}

fn reverse_identity() -> Outcome {
    let mut worst: f64 = 0.0;
    for (i, (file, _)) in CORPUS.iter().enumerate() {
        let p = corpus_problem(file).unwrap();
        for j in 0..10_000u64 {
            let mut r = derived_rng(10 + i as u64, j);
            let scale = 10f64.powf(r.gen_range(-4.0..1.0));
            let x = gaussian_vector(&mut r, p.program.n()) * scale;
            let l = gaussian_vector(&mut r, p.program.m()) * scale;
            let rp = reverse_perturbation(&p.program, &x, &l).unwrap();
            let (r1, r2) = p.program.kkt_residual(&rp.x, &rp.lambda, &rp.a, &rp.b).unwrap();
            let res = concat(&r1, &r2).norm();
            worst = worst.max(res);
            check(res <= 1e-9, || format!("{file} sample {j}: residual {res:e}"))?;
        }
    }
    Ok(format!("40000 samples, max residual {worst:.1e}"))
}

fn calmkit(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_calmkit")).args(args).output().expect("run calmkit")
}

fn determinism() -> Outcome {
    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance-corpus");
    let emitted = calmkit(&["corpus", "emit", dir.to_str().unwrap()]);
    check(emitted.status.success(), || String::from_utf8_lossy(&emitted.stderr).into_owned())?;
    let mut n = 0;
    for (file, _) in CORPUS {
        let path: &Path = &dir.join(file);
        for pt in corpus_problem(file).unwrap().points {
            let args = ["analyze", path.to_str().unwrap(), "--point", &pt.name, "--all", "--seed", "7", "--format", "json"];
            let a = calmkit(&args);
            let b = calmkit(&args);
            check(a.status.success() && b.status.success(), || {
                format!("{file} {}: exit {:?}: {}", pt.name, a.status.code(), String::from_utf8_lossy(&a.stderr))
            })?;
            check(!a.stdout.is_empty() && a.stdout == b.stdout, || format!("{file} {}: reports differ", pt.name))?;
            n += 1;
        }
    }
    Ok(format!("{n} reports byte-identical"))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("cone projections", cone_suite),
        ("directional derivative vs finite differences", dirderiv_fd),
        ("graph derivative round trip", graph_round_trip),
        ("corpus verdicts", corpus_verdicts),
        ("face enumeration vs multistart", face_enum_vs_multistart),
        ("divergence detection on P1", divergence_detection),
        ("error bound vs strong calmness", error_bound_vs_strong),
        ("strong calmness vs pseudo and M-calm", strong_vs_pseudo_and_m),
        ("SKKT direct vs conjunction", skkt_vs_conjunction),
        ("reverse perturbation identity", reverse_identity),
        ("determinism of analyze --all", determinism),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("criterion {:>2}  PASS  {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {:>2}  FAIL  {name}: {detail}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
