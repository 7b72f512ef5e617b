//! Multiple scattering of 2D scalar waves by clusters of thin dielectric rods.
//!
//! The solver chain is:
//!
//! 1. [`special`] — Bessel/Hankel functions, the outgoing 2D Green function
//!    and a small DFT, all accurate to ~1e-12 relative over the working range.
//! 2. [`geometry`] — smooth enclosing curves (trefoil-like perturbed circles),
//!    rod lattices filling them, and point/curve containment queries.
//! 3. [`foldy_lax`] — the exact point-scatterer system for one cluster: each
//!    rod is reduced to its isotropic scattering coefficient and the coupled
//!    amplitudes solve a dense linear system.
//! 4. [`layer`] — compression of a cluster's scattered field onto a discrete
//!    single-layer density (monopole weights) carried by the enclosing curve.
//! 5. [`fmm`] — coupling of many clusters through their layer densities only,
//!    so clusters never exchange rod-level information.
//!
//! Everything is deterministic for a fixed scenario (seeded RNG, no
//! platform-dependent math shortcuts), which the test suite relies on.

pub mod error;
pub mod fmm;
pub mod foldy_lax;
pub mod geometry;
pub mod layer;
pub mod linalg;
pub mod special;

pub use error::{Error, Result};
