//! Irreversible Langevin MCMC on matrix Lie groups.
//!
//! The chain lives on the trivialized phase space `G × g` and alternates an
//! exact Ornstein–Uhlenbeck refresh of the momentum, a leapfrog trajectory on
//! the group, and a Metropolis–Hastings correction that flips the momentum on
//! rejection. SO(3) with the potential `V(g) = e^{α Tr g}` is the shipped
//! model; [`experiment`] drives multi-chain convergence studies.

pub mod diagnostics;
pub mod error;
pub mod experiment;
pub mod group;
pub mod integrator;
pub mod model;
pub mod ou;
pub mod sampler;
pub mod trace_io;

pub use error::{Error, Result};
pub use group::{AlgebraElement, GroupElement, So3};
pub use integrator::{LeapfrogParams, PhaseState};
pub use ou::OuTime;
pub use sampler::{ChainConfig, Init, Sampler, StepRecord, Trace};
