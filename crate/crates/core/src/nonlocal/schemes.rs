//! Interchangeable evaluation strategies for `I_s`, selected by name.

use super::profile::interp_lagrange;
use super::{check_order, FracLap, Profile, TailModel};
use crate::{Error, Result};

/// A way of evaluating the fractional Laplacian of a profile.
pub trait FracLapScheme: Send + Sync {
    fn name(&self) -> &'static str;
    fn apply(&self, p: &Profile, s: f64) -> Result<Profile>;
}

/// The contract scheme: first order in `h^{2-2s}` near the singularity.
#[derive(Debug, Default, Clone, Copy)]
pub struct ProductHat;

impl FracLapScheme for ProductHat {
    fn name(&self) -> &'static str {
        "product_hat"
    }

    fn apply(&self, p: &Profile, s: f64) -> Result<Profile> {
        super::frac_lap_apply(p, s)
    }
}

/// Extrapolation over nested refinements `h, h/2, ...` of an eight-point
/// Lagrange reconstruction of the profile, cancelling the `h^{2-2s}`, `h^2` and
/// `h^{4-2s}` error terms of [`ProductHat`]. Intended as a cross-check on
/// smooth fields.
#[derive(Debug, Clone, Copy)]
pub struct Richardson {
    pub levels: usize,
}

impl Default for Richardson {
    fn default() -> Self {
        Self { levels: 4 }
    }
}

impl Richardson {
    fn exponents(s: f64) -> Vec<f64> {
        vec![2.0 - 2.0 * s, 2.0, 4.0 - 2.0 * s, 4.0, 6.0 - 2.0 * s]
    }

    /// Combination weights `a_k` with `Σ a_k = 1` and `Σ a_k 2^{-k e_j} = 0`.
    fn weights(levels: usize, s: f64) -> Result<Vec<f64>> {
        let ex = Self::exponents(s);
        if levels == 0 || levels > ex.len() + 1 {
            return Err(Error::Domain(format!("unsupported extrapolation depth {levels}")));
        }
        let mut a = vec![vec![0.0; levels + 1]; levels];
        for k in 0..levels {
            a[0][k] = 1.0;
            for j in 1..levels {
                a[j][k] = 0.5f64.powf(k as f64 * ex[j - 1]);
            }
        }
        a[0][levels] = 1.0;
        crate::linsolve::dense_solve(a).ok_or_else(|| Error::Domain("singular extrapolation system".into()))
    }
}

impl FracLapScheme for Richardson {
    fn name(&self) -> &'static str {
        "richardson"
    }

    fn apply(&self, p: &Profile, s: f64) -> Result<Profile> {
        check_order(s)?;
        let tail = *p.tail()?;
        let weights = Self::weights(self.levels, s)?;
        let n = p.grid.len();
        let mut out = vec![0.0; n];
        for (k, a) in weights.iter().enumerate() {
            let factor = 1usize << k;
            let g = p.grid.refined(factor);
            let fine: Vec<f64> = g.nodes().into_iter().map(|x| interp_lagrange(p, x, 4)).collect();
            let vals = FracLap::new(&g, s)?.apply_values(&fine, &tail)?;
            for (i, o) in out.iter_mut().enumerate() {
                *o += a * vals[i * factor];
            }
        }
        let tail = TailModel::matched(&p.grid, &out, 0.0, 0.0, 2.0 * s);
        Ok(Profile { grid: p.grid, values: out, tail: Some(tail) })
    }
}

/// Names accepted by [`scheme_by_name`].
pub fn scheme_names() -> &'static [&'static str] {
    &["product_hat", "richardson"]
}

pub fn scheme_by_name(name: &str) -> Result<Box<dyn FracLapScheme>> {
    match name {
        "product_hat" | "default" => Ok(Box::new(ProductHat)),
        "richardson" => Ok(Box::new(Richardson::default())),
        other => Err(Error::Config(format!("unknown fractional Laplacian scheme '{other}'"))),
    }
}
