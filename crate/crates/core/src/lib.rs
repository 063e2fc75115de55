//! Numerical laboratory for discrete-time dissipative random dynamical systems
//! with unbounded kicks.
//!
//! The crate simulates systems of the form `u_k = S(u_{k-1}) + eta_k` on a
//! finite Galerkin truncation of a Hilbert space, where `S` is a dissipative
//! deterministic map and the kicks `eta_k` are i.i.d. with a decomposable law.
//! On top of the simulation layer it provides
//!
//! * verifiers for the structural hypotheses of the framework (dissipativity,
//!   high-mode squeezing, noise moments),
//! * maximal couplings of one-step laws and coupled-trajectory diagnostics,
//! * mixing-rate estimation in the dual-Lipschitz metric,
//! * tilted (Feynman--Kac) semigroups, pressure functions and their
//!   eigen-triples, with exact finite-chain and 1D-grid oracles,
//! * rate functions obtained by convex conjugation of the pressure, and
//!   empirical large-deviation tail comparisons.
//!
//! Monte Carlo ensembles parallelise over trajectories with `rayon` when the
//! `parallel` feature (on by default) is enabled; every estimate is reduced in
//! a fixed trajectory order, so results are bit-identical for any worker
//! count, including the sequential fallback.

pub mod chain;
pub mod coupling;
pub mod error;
pub mod exec;
pub mod ldp;
pub mod markov;
pub mod metric;
pub mod model;
pub mod noise;
pub mod rng;
pub mod systems;
pub mod tilted;

pub use error::{Error, Result};
pub use model::{DissipativityConstants, StateVector, System};
