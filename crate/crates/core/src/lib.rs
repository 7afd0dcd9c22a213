//! Spectral theory of label-invariant operators on trees of finite cone type.
//!
//! The crate computes reduced truncated Green functions by fixed-point
//! iteration in the hyperbolic upper half plane, scans for spectral bands,
//! handles radial and random perturbations, and provides an independent dense
//! oracle on truncated trees.

pub mod error;
pub mod green;
pub mod hyperbolic;
pub mod io;
pub mod operator;
pub mod oracle;
pub mod radial;
pub mod random;
pub mod scan;
pub mod spectral;
pub mod tree;

pub use error::{Error, Result};
pub use green::{GreenVector, SolverOptions, SpectralPoint};
pub use operator::OperatorParams;
pub use tree::{SubstitutionMatrix, TruncatedTree};

pub use num_complex::Complex64;
