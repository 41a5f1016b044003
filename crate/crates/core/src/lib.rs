//! Closed-system quantum annealing of engineered MWIS instances.
//!
//! The numerical core is generic over the scalar type (see [`Real`]); the
//! aliases at the bottom of this file fix it to `f64`, which is what the CLI
//! and the acceptance suite use.

pub mod cache;
pub mod dynamics;
pub mod error;
pub mod fit;
pub mod hamiltonian;
pub mod instance;
pub mod linalg;
pub mod lz;
pub mod optimize;
pub mod oracle;
pub mod perturbation;
pub mod scalar;
pub mod spectrum;
pub mod sweep;
pub mod units;

pub use cache::Cache;
pub use error::{Error, Result};
pub use hamiltonian::{BasisKind, CatalystSpec, DickeBasis};
pub use instance::{Bitstring, GraphInstance, InstanceFile};
pub use scalar::Real;

pub type Matrix = linalg::Matrix<f64>;
pub type SymmetricEigen = linalg::SymmetricEigen<f64>;
pub type ProblemParams = instance::ProblemParams<f64>;
pub type AnnealingOperators = hamiltonian::AnnealingOperators<f64>;
pub type HamiltonianOperator = hamiltonian::HamiltonianOperator<f64>;
pub type SpectrumResult = spectrum::SpectrumResult<f64>;
pub type GapMinimum = spectrum::GapMinimum<f64>;
pub type EvolutionResult = dynamics::EvolutionResult<f64>;
pub type LzParams = lz::LzParams<f64>;
