//! Replica-symmetric free energies, state evolution and AMP dynamics for
//! Ising and spherical spin glasses with orthogonally invariant couplings.

// `!(x > 0.0)` is how the guards reject NaN alongside out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod ensemble_sim;
pub mod error;
pub mod oracle;
pub mod par;
pub mod quad;
pub mod rng;
pub mod rs_core;
pub mod solve;
pub mod spectral_law;
pub mod state_evolution;
pub mod validation;
pub mod variational;

pub use error::{Error, Result};
pub use par::Execution;
pub use rs_core::{ModelSpec, RSConstants};
pub use spectral_law::{FieldLaw, SpectralLaw};
pub use state_evolution::SEState;
