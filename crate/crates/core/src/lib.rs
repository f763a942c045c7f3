//! Reconstruction of sparse vectors and low-rank matrices from uniformly
//! quantized, dithered random measurements.
//!
//! The main entry points are the programs in [`solvers`] (consistent basis
//! pursuit and its `ℓ∞`-constrained variant, plus the BPDN/BPDQ baselines) and
//! the experiment harness in [`experiments`].

pub mod bounds;
pub mod error;
pub mod experiments;
pub mod linalg;
pub mod models;
pub mod rng;
pub mod sensing;
pub mod solvers;

pub use error::{QcsError, Result};
pub use linalg::{svd, DenseMatrix, SvdResult};
pub use models::AtomicModel;
pub use sensing::{Distribution, QuantizedMeasurements, QuantizerConfig, SensingEnsemble};
pub use solvers::{ReconResult, SolverConfig};
