//! JSON problem files.
//!
//! ```json
//! {"n": 1,
//!  "cone": [{"kind": "zero", "dim": 1}],
//!  "f": {"Q": [[1.0]], "c": [0.0], "r": 0.0},
//!  "g": [{"A": [[2.0]], "b": [0.0], "d": 0.0}],
//!  "points": [{"name": "critical", "x": [0.0], "lambda": [-0.5]}]}
//! ```
//!
//! Block `dim` is always the ambient dimension, so a PSD block of order `k`
//! has `dim = k(k+1)/2` and its rows of `g` are svec coordinates.

use serde::{Deserialize, Serialize};

use crate::cone::svec::order_from_len;
use crate::cone::{ConeBlock, ProductCone, Sign};
use crate::error::{Error, Result};
use crate::linalg::{Matrix, Vector};
use crate::problem::{validate_kkt_point, ConicProgram, KktPoint, QuadraticFn, QuadraticMap, KKT_TOL};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    pub n: usize,
    pub cone: Vec<BlockSpec>,
    pub f: ScalarSpec,
    pub g: Vec<RowSpec>,
    #[serde(default)]
    pub points: Vec<PointSpec>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockSpec {
    pub kind: String,
    pub dim: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalarSpec {
    #[serde(rename = "Q")]
    pub q: Vec<Vec<f64>>,
    pub c: Vec<f64>,
    #[serde(default)]
    pub r: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RowSpec {
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    #[serde(default)]
    pub d: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointSpec {
    pub name: String,
    pub x: Vec<f64>,
    pub lambda: Vec<f64>,
}

/// A named point from a file. Invalid KKT points are kept with a warning
/// so that residual-only commands can still display them.
#[derive(Clone, Debug)]
pub struct NamedPoint {
    pub name: String,
    pub x: Vector,
    pub lambda: Vector,
    pub warning: Option<String>,
}

#[derive(Clone, Debug)]
pub struct ParsedProblem {
    pub program: ConicProgram,
    pub points: Vec<NamedPoint>,
}

impl ParsedProblem {
    pub fn point(&self, name: &str) -> Result<&NamedPoint> {
        self.points.iter().find(|p| p.name == name).ok_or_else(|| {
            let names: Vec<&str> = self.points.iter().map(|p| p.name.as_str()).collect();
            Error::Parse(format!("no point named {name:?} (available: {})", names.join(", ")))
        })
    }

    pub fn kkt_point(&self, name: &str) -> Result<KktPoint> {
        let p = self.point(name)?;
        validate_kkt_point(&self.program, &p.x, &p.lambda, KKT_TOL)
    }
}

fn matrix(rows: &[Vec<f64>], n: usize, what: &str) -> Result<Matrix> {
    if rows.len() != n || rows.iter().any(|r| r.len() != n) {
        return Err(Error::Parse(format!("{what}: expected a {n}x{n} matrix")));
    }
    Ok(Matrix::from_fn(n, n, |i, j| rows[i][j]))
}

fn vector(v: &[f64], n: usize, what: &str) -> Result<Vector> {
    if v.len() != n {
        return Err(Error::Parse(format!("{what}: expected length {n}, got {}", v.len())));
    }
    Ok(Vector::from_row_slice(v))
}

fn block(spec: &BlockSpec, index: usize) -> Result<ConeBlock> {
    let dim = spec.dim;
    if dim == 0 {
        return Err(Error::Parse(format!("cone[{index}]: dim must be positive")));
    }
    Ok(match spec.kind.as_str() {
        "zero" => ConeBlock::Zero { dim },
        "orthant_nonpos" => ConeBlock::Orthant { dim, sign: Sign::NonPos },
        "orthant_nonneg" => ConeBlock::Orthant { dim, sign: Sign::NonNeg },
        "soc" => ConeBlock::SecondOrder { dim },
        "psd" => ConeBlock::Psd {
            order: order_from_len(dim).ok_or_else(|| {
                Error::Parse(format!("cone[{index}]: psd svec length {dim} is not of the form k(k+1)/2"))
            })?,
        },
        other => return Err(Error::Parse(format!("cone[{index}]: unknown kind {other:?}"))),
    })
}

pub fn parse_problem_str(text: &str) -> Result<ParsedProblem> {
    let spec: ProblemSpec = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    build(&spec)
}

pub fn parse_problem(path: &std::path::Path) -> Result<ParsedProblem> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    parse_problem_str(&text).map_err(|e| match e {
        Error::Parse(m) => Error::Parse(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn build(spec: &ProblemSpec) -> Result<ParsedProblem> {
    let n = spec.n;
    let blocks = spec.cone.iter().enumerate().map(|(i, b)| block(b, i)).collect::<Result<Vec<_>>>()?;
    let cone = ProductCone::new(blocks)?;
    if spec.g.len() != cone.total_dim() {
        return Err(Error::Parse(format!(
            "g has {} rows but the cone has dimension {}",
            spec.g.len(),
            cone.total_dim()
        )));
    }
    let f = QuadraticFn::new(matrix(&spec.f.q, n, "f.Q")?, vector(&spec.f.c, n, "f.c")?, spec.f.r)
        .map_err(|e| Error::Parse(format!("f: {e}")))?;
    let rows = spec
        .g
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let what = format!("g[{i}]");
            QuadraticFn::new(matrix(&r.a, n, &format!("{what}.A"))?, vector(&r.b, n, &format!("{what}.b"))?, r.d)
                .map_err(|e| Error::Parse(format!("{what}: {e}")))
        })
        .collect::<Result<Vec<_>>>()?;
    let program = ConicProgram::quadratic(cone, f, QuadraticMap { rows })?;
    let mut points = Vec::new();
    for p in &spec.points {
        if points.iter().any(|q: &NamedPoint| q.name == p.name) {
            return Err(Error::Parse(format!("duplicate point name {:?}", p.name)));
        }
        let x = vector(&p.x, n, &format!("point {:?} x", p.name))?;
        let lambda = vector(&p.lambda, program.m(), &format!("point {:?} lambda", p.name))?;
        let warning = validate_kkt_point(&program, &x, &lambda, KKT_TOL).err().map(|e| e.to_string());
        points.push(NamedPoint { name: p.name.clone(), x, lambda, warning });
    }
    Ok(ParsedProblem { program, points })
}

/// The shipped example problems as `(file name, JSON text)`.
pub const CORPUS: [(&str, &str); 4] = [
    ("p1.json", include_str!("../corpus/p1.json")),
    ("p2.json", include_str!("../corpus/p2.json")),
    ("p3.json", include_str!("../corpus/p3.json")),
    ("p4.json", include_str!("../corpus/p4.json")),
];

pub fn corpus_problem(file: &str) -> Result<ParsedProblem> {
    let (_, text) = CORPUS
        .iter()
        .find(|(name, _)| *name == file || name.trim_end_matches(".json") == file)
        .ok_or_else(|| Error::Parse(format!("no corpus problem {file:?}")))?;
    parse_problem_str(text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corpus_parses_and_points_validate() {
        for (name, text) in CORPUS {
            let p = parse_problem_str(text).unwrap();
            for pt in &p.points {
                assert!(pt.warning.is_none(), "{name} {}: {:?}", pt.name, pt.warning);
            }
        }
        let p1 = corpus_problem("p1").unwrap();
        let names: Vec<_> = p1.points.iter().map(|p| p.name.as_str()).collect();
        assert_eq!(names, ["critical", "noncritical"]);
    }

    #[test]
    fn dimension_faults_are_parse_errors() {
        let bad = r#"{"n":1,"cone":[{"kind":"zero","dim":2}],"f":{"Q":[[1]],"c":[0],"r":0},
                      "g":[{"A":[[2]],"b":[0],"d":0}],"points":[]}"#;
        let msg = parse_problem_str(bad).unwrap_err().to_string();
        assert!(msg.contains('1') && msg.contains('2'), "{msg}");
        let bad_psd = r#"{"n":1,"cone":[{"kind":"psd","dim":2}],"f":{"Q":[[1]],"c":[0],"r":0},
                      "g":[{"A":[[0]],"b":[1],"d":0},{"A":[[0]],"b":[1],"d":0}],"points":[]}"#;
        assert!(matches!(parse_problem_str(bad_psd), Err(Error::Parse(_))));
    }

    #[test]
    fn invalid_point_kept_with_warning() {
        let text = r#"{"n":1,"cone":[{"kind":"zero","dim":1}],"f":{"Q":[[1]],"c":[0],"r":0},
                      "g":[{"A":[[2]],"b":[0],"d":0}],"points":[{"name":"off","x":[0.1],"lambda":[-0.5]}]}"#;
        let p = parse_problem_str(text).unwrap();
        assert!(p.points[0].warning.is_some());
        assert!(p.kkt_point("off").is_err());
    }

    #[test]
    fn asymmetric_input_rejected() {
        let text = r#"{"n":2,"cone":[{"kind":"zero","dim":1}],"f":{"Q":[[1,1],[0,1]],"c":[0,0],"r":0},
                      "g":[{"A":[[0,0],[0,0]],"b":[1,0],"d":0}],"points":[]}"#;
        assert!(matches!(parse_problem_str(text), Err(Error::Parse(_))));
    }
}
