pub mod cone;
pub mod error;
pub mod generate;
pub mod linalg;
pub mod multiplier;
pub mod perturbation;
pub mod probe;
pub mod problem;
pub mod problem_file;
pub mod report;
pub mod sampling;
pub mod stability;

pub use cone::{ConeBlock, FaceDescriptor, ProductCone, Sign};
pub use error::{Error, Result};
pub use linalg::{Matrix, Vector};
pub use perturbation::{EquivalenceReport, ReversePerturbation, SolverConfig};
pub use probe::{Growth, ProbeConfig, RatioStats};
pub use problem::{ConicProgram, KktPoint};
pub use problem_file::ParsedProblem;
pub use report::{Analysis, AnalysisRequest, Format, StabilityReport};
pub use stability::{Method, StabilityConfig, StabilityVerdict, Status};
