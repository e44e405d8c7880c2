//! Potential theory of symmetric random walks on `Z^d`, `d >= 5`, at desk scale.
//!
//! The crate simulates walks, computes lattice Green's functions by Fourier
//! inversion, solves for equilibrium measures and capacities of finite sets
//! (in particular of walk ranges), evaluates the Brownian covariance kernels
//! that control the range-capacity variance in dimension five, and packages
//! reproducible Monte Carlo experiments on top of all of that.
//!
//! Everything is deterministic given a master seed: trials draw from
//! counter-based streams, and parallel reductions are order-fixed, so results
//! do not depend on the number of worker threads.

pub mod brownian;
pub mod experiments;
pub mod green;
pub mod io;
pub mod lattice;
pub mod linalg;
pub mod potential;
pub mod quad;
pub mod rangecap;
pub mod rng;
pub mod stats;
pub mod stepdist;
pub mod walk;

pub use stepdist::StepDistribution;
