//! Lower bounds to the quantum Fisher information of noisy
//! Jastrow–Gutzwiller chains.
//!
//! The crate is organised bottom-up:
//!
//! * [`model`] — configurations, parameters, result records;
//! * [`jastrow`] — amplitudes and amplitude ratios;
//! * [`operators`] — the metrological generators;
//! * [`sampler`] — Metropolis sampling of `|c_n|²` and bootstrap tuples;
//! * [`estimators`] — Monte Carlo moments `Tr(ρ^r O ρ^s O)` per channel;
//! * [`bounds`] — `T_k`, polynomial bounds `F_n`, Krylov bounds `B_n`;
//! * [`exact`] — dense exact-diagonalization oracle;
//! * [`analytics`] — closed-form reference values.

pub mod analytics;
pub mod bounds;
pub mod error;
pub mod estimators;
pub mod exact;
pub mod jastrow;
pub mod model;
pub mod operators;
pub mod sampler;

pub use error::{Error, ErrorCategory, Result};
pub use jastrow::{Amplitude, JastrowModel};
pub use model::{
    validate_params, ChannelKind, ChannelSpec, Configuration, MomentEstimate, OperatorKind, OperatorSpec,
    ParamBundle, SystemParams,
};
