//! Stochastic optimizers as Markov chains: simulation, tail-index estimation
//! and moment/ergodicity theory for heavy-tailed iterates.

pub mod analysis;
pub mod chain;
pub mod cli_io;
pub mod error;
pub mod optimizers;
pub mod problems;
pub mod rng;
pub mod tail_fit;
pub mod theory;

pub use chain::{
    run_chain, run_ensemble, AugmentedLayout, ChainConfig, ChainTrace, ParamVec, StepContext,
    StepFailure, StepMap,
};
pub use error::{Error, Result};
pub use optimizers::{OptimizerKind, OptimizerSpec, PerturbedVariant};
