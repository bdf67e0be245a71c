//! Pseudo-density operators (PDOs): construction, marginal problems,
//! space-time entropies, maximum-entropy inference and pseudo-channels.

pub mod channel;
pub mod circuit;
pub mod classical;
pub mod entropy;
pub mod error;
pub mod fixtures;
pub mod json;
pub mod linalg;
pub mod marginal;
pub mod maxent;
pub mod lp;
pub mod operator_basis;
pub mod pdo;
pub mod random;

pub use error::{Error, Result};
pub use linalg::{CMatrix, CVector, C64};
pub use operator_basis::{basis, check_basis, make_basis, BasisReport, OperatorBasis};
pub use pdo::{Pdo, Purification, SeparableExpansion, Spectrum, ValidationReport};
pub use channel::{Lindbladian, PseudoChannel};
pub use circuit::{build_pdo, temporal_two_event, CircuitSpec};
pub use classical::{solve_chordal, CompatibilityGraph, QuasiDistribution};
pub use entropy::{entropy, relative_entropy, EntropyReport};
pub use marginal::{solve_herm1, MarginalScenario, SolutionFamily};
pub use maxent::{infer, MaxEntProblem, MaxEntResult};
