//! Quantum mechanics on the preparation space: the manifold of pure states
//! coordinatized by measurement-outcome probabilities `p_i` and phases
//! `phi_i` relative to a measurement frame.
//!
//! The crate implements the canonical (Hamiltonian) formulation in these
//! coordinates and checks every claimed equivalence against an independent
//! Hilbert-space computation:
//!
//! - [`core`]: domain types and conversions between `(p, phi)` coordinates
//!   and complex state vectors.
//! - [`geometry`]: the Fubini-Study line element and its agreement with the
//!   Hilbert-space ray angle.
//! - [`transform`]: changes of measurement frame, their unitarity
//!   constraints, and numerical verification of the symplectic condition.
//! - [`dynamics`]: Hamilton-like evolution, Poisson brackets, and the
//!   commutator correspondence.
//! - [`statmech`]: maximum-entropy inference, Monte-Carlo integration over
//!   the invariant measure, Liouville evolution by characteristics, and
//!   density-matrix reconstruction.
//! - [`cli`]: configuration ingestion, verification suites, and
//!   machine-readable reports for the `prepspace` binary.

pub mod cli;
pub mod core;
pub mod dynamics;
pub mod error;
pub mod geometry;
pub mod statmech;
pub mod transform;

pub use error::{Error, Result};
