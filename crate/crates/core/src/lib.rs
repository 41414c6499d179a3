//! Metastability toolkit for Glauber spin-flip dynamics on hierarchical
//! lattices.
//!
//! The crate computes the three quantities governing the metastable crossover
//! from the all-minus to the all-plus state — the energy barrier, the set of
//! critical configurations, and the prefactor of the mean crossover time —
//! three independent ways:
//!
//! * [`analytics`] evaluates closed-form expressions (exact profile scans,
//!   regime formulas for standard couplings, large-N asymptotics);
//! * [`oracle`] enumerates the full landscape on small instances and extracts
//!   everything exactly (bottleneck heights, stability levels, gates, the
//!   capacity, mean hitting times, the spectral gap);
//! * [`dynamics`] samples the crossover time by kinetic Monte Carlo and
//!   checks the Kramers law and the exponential law statistically.
//!
//! [`lattice`], [`energy`] and [`refpath`] hold the underlying geometry,
//! Hamiltonian and reference-path machinery.

pub mod analytics;
pub mod dynamics;
pub mod energy;
pub mod error;
pub mod lattice;
mod linalg;
pub mod oracle;
pub mod refpath;
pub mod rng;

pub use error::{Error, Result};
pub use lattice::{Configuration, LatticeParams, VertexId};
