//! Fastest mixing Markov chains on K-partite pseudo-distance-regular (K-PPDR)
//! networks.
//!
//! The crate builds the four network families (symmetric, semi-symmetric,
//! cycle and semi-cycle), assembles symmetric transition matrices from one
//! probability per edge orbit, and provides three independent routes to the
//! optimal chain: closed forms, a dual certificate for the symmetric family,
//! and a derivative-free minimizer of the second largest eigenvalue modulus.
//! The `mixsim` module reproduces the averaging experiments used to compare
//! optimal weights against Metropolis-Hastings weights.

pub mod chain;
pub mod error;
pub mod linalg;
pub mod mixsim;
pub mod numsolve;
pub mod optimal;
pub mod stratify;
pub mod topology;

pub use chain::{assemble, metropolis_hastings, slem, OrbitProbabilities, TransitionMatrix};
pub use error::{Error, Result};
pub use linalg::{eigenvalues_symmetric, slem_of_spectrum, Spectrum, SymmetricMatrix};
pub use topology::{build_graph, default_pattern, Family, Graph, LayerKind, Node, TopologySpec};
