//! Fixtures shared by the benchmarks.

use calmkit::problem_file::corpus_problem;
use calmkit::{ConicProgram, KktPoint};

/// A named point of a built-in problem.
pub fn corpus_point(file: &str, point: &str) -> (ConicProgram, KktPoint) {
    let p = corpus_problem(file).expect("built-in problem");
    let k = p.kkt_point(point).expect("built-in point");
    (p.program, k)
}
