//! Computational laboratory for harmonic functions of polynomial growth on
//! finitely generated groups.
//!
//! The crate realizes word-metric balls, courteous step measures and their
//! hitting measures, discrete gradients, Poincaré and reverse Poincaré
//! checks, separated covers, Gram-determinant scans, and numerical bases of
//! the spaces `HF_k(G, mu)` on `Z^d`, the discrete Heisenberg group, index-`n`
//! sublattices and (as a negative control) the lamplighter group.

pub mod dimension;
pub mod error;
pub mod experiment;
pub mod group;
pub mod harmonic;
pub mod inequality;
pub mod linalg;
pub mod measure;
pub mod poly;
pub mod polynomial;

pub use error::{LabError, Result};
pub use group::{Ball, Group, GroupElement};
pub use measure::StepMeasure;
