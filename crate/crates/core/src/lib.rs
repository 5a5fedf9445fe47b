//! Qudit measurement-based quantum computation on ℤ_d×ℤ_d×ℤ_d SPT resource states.
//!
//! The crate is organised bottom-up:
//!
//! - [`zd`]: exact arithmetic in ℤ_d and powers of ϖ = e^{2πi/d}.
//! - [`statevector`]: a dense n-qudit simulator used as ground truth everywhere else.
//! - [`lattice`]: triangular and Union-Jack lattices, the CCZ resource state, its
//!   color-class symmetry, domain-sublattice measurement and the decorated
//!   domain-wall form of the same circuit.
//! - [`graphlike`]: weighted graph-like states with diagonal local frames, the
//!   Z / X-pair / ZX^k measurement rules and coarse-graining to a square grid.
//! - [`percolation`]: Monte Carlo estimates of spanning probability for the
//!   random graphs left behind by domain measurement.
//! - [`gates`]: gate constructions on short cluster-like chains, checked branch by
//!   branch against the simulator.
//! - [`verify`]: symmetry, domain-measurement and domain-wall suites over small lattices.
//! - [`cli`]: the batch front end behind the `qudit-mbqc` binary.
//!
//! Site 0 is always the most significant digit of a basis index.

pub mod cli;
pub mod error;
pub mod gates;
pub mod graphlike;
pub mod lattice;
pub mod percolation;
pub mod statevector;
pub mod verify;
pub mod zd;

pub use error::{Error, Result};
pub use zd::{PhaseExp, PrimeDim, ZdElem};
