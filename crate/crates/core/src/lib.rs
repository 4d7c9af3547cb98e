//! Sampling multivariate count distributions with downward-closed support.
//!
//! The central sampler ([`pps`]) simulates a multivariate temporal point
//! process whose event counts in a sliding window of length `m` converge in
//! distribution to the target. Birth-death and Zanella-process baselines live
//! in [`ctmc`]; [`ess`] implements the multivariate effective-sample-size
//! pipeline used to compare them, [`oracle`] provides exact answers for small
//! instances, and [`learning`] fits the stochastic neural network target with
//! contrastive gradients.

pub mod ctmc;
pub mod ess;
pub mod lattice;
pub mod learning;
pub mod oracle;
pub mod pps;
pub mod sampler;
pub mod targets;
mod text;
pub mod trace;

pub use lattice::{CountVector, StateBox};
pub use sampler::{Chain, SamplerKind};
pub use targets::{EvalMode, Target, TargetModel};
pub use trace::{TraceSink, WeightedTrace};
