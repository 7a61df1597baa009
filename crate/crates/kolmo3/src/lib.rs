//! Numerical laboratory for a three-dimensional cubic Kolmogorov system
//! driven by one-dimensional linear multiplicative white noise.
//!
//! The deterministic part couples three logistic-type components through
//! cubic interaction terms controlled by a growth rate `alpha` and offsets
//! `d1, d2, d3`; the stochastic system multiplies every component by the same
//! scalar noise `sigma x_i dW`. The crate provides, side by side:
//!
//! * the exact structures of the model: equilibria with closed-form spectra,
//!   first integrals and their invariant cones, periodic orbits and their
//!   periods, regime classification by the signs of `m_i = alpha + d_i`
//!   ([`model`], [`flow`]);
//! * the scalar radial law: explicit logistic solution, its pull-back random
//!   equilibrium, the stationary density and its shape change at
//!   `sigma^2 = alpha` ([`logistic`]);
//! * direct simulation and the decomposition of the 3-d flow into the radial
//!   factor and a time-changed deterministic flow, on shared noise paths
//!   ([`path`], [`sde`]);
//! * random-dynamics instruments: pull-back limits, Lyapunov exponents both
//!   closed-form and sampled, random periodic solutions with random period
//!   ([`rds`]);
//! * empirical-measure tooling: occupation measures on invariant cones,
//!   Kolmogorov-Smirnov distances, vanishing-noise and density-shape sweeps
//!   ([`measure`]).
//!
//! Everything is deterministic given a seed: noise paths are grid-addressed,
//! so refining a path keeps already-realized nodes bit-identical and ensemble
//! results do not depend on the number of worker threads.
//!
//! The `examples/` directory is the guided tour; each file runs one study
//! end to end. A thin binary (`kolmo3`) exposes the same studies as batch
//! subcommands writing CSV artifacts plus a manifest.

pub mod cli;
pub mod error;
pub mod flow;
pub mod logistic;
pub mod measure;
pub mod model;
pub mod path;
pub mod rds;
pub mod rng;
pub mod sde;
pub mod special;

pub use error::{Error, Result};
pub use model::{DriftRegime, ModelParams, State3};
