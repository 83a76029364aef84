//! Photon statistics in bosonic chains whose nearest-neighbor couplings fluctuate.
//!
//! A chain of `M` bosonic modes is coupled by nearest-neighbor hopping terms whose
//! strengths carry delta-correlated random fluctuations. The library computes mean
//! photon numbers and the normalized second-order correlation `g2` along the chain
//! by two independent routes, plus a brute-force reference solver used to adjudicate
//! between them:
//!
//! * [`moments`]: closed systems of ordinary differential equations for operator
//!   expectation values, integrated to the requested tolerance.
//! * [`montecarlo`]: ensembles of unitary trajectories with couplings resampled on
//!   each sub-interval, reduced deterministically so results are reproducible
//!   bit-for-bit regardless of worker count.
//! * [`fockoracle`]: direct state-vector and density-matrix evolution on a truncated
//!   Fock space. Slow, but independent of every approximation made elsewhere.
//!
//! [`model`] holds the shared problem description, [`propagator`] the unitary
//! single-interval steps, and [`analytics`] the closed-form predictions the
//! numerical routes are checked against.

pub mod analytics;
pub mod fockoracle;
mod linalg;
pub mod model;
pub mod moments;
pub mod montecarlo;
mod ode;
pub mod propagator;

pub use num_complex::Complex64;
