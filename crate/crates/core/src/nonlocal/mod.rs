//! Uniform grids, tailed profiles and the fractional Laplacian.
//!
//! A [`Profile`] samples a field on a symmetric uniform [`Grid`] and carries a
//! [`TailModel`] `ℓ± + a±|x|^{-p}` describing the field beyond `±L`. The
//! operator
//!
//! ```text
//! I_s p(x) = ∫_0^∞ (p(x+y) + p(x-y) - 2p(x)) / y^{1+2s} dy
//! ```
//!
//! is evaluated by [`FracLap`] with a curvature-corrected central cell, product
//! integration of the piecewise-linear second difference on the lattice, and a
//! semi-analytic far field driven by the tail model.

mod fraclap;
mod grid;
mod profile;
mod schemes;

pub use fraclap::{frac_lap_apply, FracLap};
pub use grid::Grid;
pub use profile::{integrate_line, interp_at, LineMode, Profile, TailModel, TAIL_MATCH_TOL};
pub use schemes::{scheme_by_name, scheme_names, FracLapScheme, ProductHat, Richardson};

use crate::{Error, Result};

pub(crate) fn check_order(s: f64) -> Result<()> {
    if s > 0.0 && s < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("fractional order s = {s} outside (0, 1)")))
    }
}
