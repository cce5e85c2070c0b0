//! Measure-preserving discrete flows for variational inference.
//!
//! The core is a deterministic, invertible map on an augmented discrete state
//! (atoms paired with auxiliary uniforms) that leaves a target PMF invariant.
//! Averaging iterates of the map over a tractable reference yields a
//! variational family with exact i.i.d. sampling and a computable density.
//! A mixed variant composes the discrete pass with an uncorrected Hamiltonian
//! step for joint discrete and continuous targets.
//!
//! Core numerics are generic over the scalar type via `num_traits::Float`;
//! concrete `f64` aliases are exported at the crate root.

pub mod baselines;
pub mod error;
pub mod experiment;
pub mod mad;
pub mod mixed;
pub mod mixflow;
pub mod models;
pub mod pmf;
pub mod state;
pub mod stats;
pub mod target;

pub use error::{MadMixError, Result};
pub use mad::{mad_forward, mad_forward_n, mad_inverse, FlowResult, ShiftParam};
pub use mixflow::{FactorizedReference, MadMixFlow, Reference, UniformReference, WeightedPair};
pub use models::{IsingChain, ToyTarget};
pub use pmf::DiscretePmf;
pub use state::AugmentedState;
pub use target::{validate_target, FullConditionalTarget, TargetDiagnostics};

/// Default scalar aliases.
pub type Pmf64 = DiscretePmf<f64>;
pub type Pmf32 = DiscretePmf<f32>;
pub type State64 = AugmentedState<f64>;
pub type Shift64 = ShiftParam<f64>;
