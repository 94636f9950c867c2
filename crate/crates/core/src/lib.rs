//! Numerics for the fractional Peierls-Nabarro model on the real line.
//!
//! The crate is organised bottom-up: [`nonlocal`] holds grids, tailed
//! profiles and the fractional Laplacian; [`potential`] the periodic
//! potential and the external stress; [`layer`] the heteroclinic layer and
//! its corrector; [`particles`] the singular particle ODEs; [`evolution`]
//! the rescaled parabolic problem; [`barriers`] the explicit super- and
//! subsolutions together with their residuals.

pub mod barriers;
pub mod error;
pub mod evolution;
pub mod layer;
pub mod linsolve;
pub mod nonlocal;
pub mod ode;
pub mod particles;
pub mod potential;
pub mod quadrature;

pub use error::{Error, Result};
