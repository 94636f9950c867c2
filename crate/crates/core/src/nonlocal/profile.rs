use serde::{Deserialize, Serialize};

use super::Grid;
use crate::{Error, Result};

/// Matching tolerance between tail model and boundary samples, relative to the
/// field scale `max(1, |ℓ|, |value|)`.
pub const TAIL_MATCH_TOL: f64 = 1e-3;

/// Far-field model `ℓ± + a±|x|^{-p} + b±|x|^{-p-1}` for `|x| > L`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailModel {
    pub left_limit: f64,
    pub right_limit: f64,
    pub order: f64,
    pub left_coeff: f64,
    pub right_coeff: f64,
    #[serde(default)]
    pub left_coeff2: f64,
    #[serde(default)]
    pub right_coeff2: f64,
}

impl TailModel {
    /// One-term model `ℓ± + a±|x|^{-p}`.
    pub fn new(left_limit: f64, right_limit: f64, order: f64, left_coeff: f64, right_coeff: f64) -> Self {
        Self { left_limit, right_limit, order, left_coeff, right_coeff, left_coeff2: 0.0, right_coeff2: 0.0 }
    }

    pub fn constant(c: f64) -> Self {
        Self::new(c, c, 1.0, 0.0, 0.0)
    }

    /// Coefficients chosen so that the model reproduces the boundary samples.
    pub fn matched(grid: &Grid, values: &[f64], left_limit: f64, right_limit: f64, order: f64) -> Self {
        let lp = grid.half_width().powf(order);
        Self::new(
            left_limit,
            right_limit,
            order,
            (values[0] - left_limit) * lp,
            (values[values.len() - 1] - right_limit) * lp,
        )
    }

    /// Two-term model through the boundary samples and the samples an eighth
    /// of the grid further in. Captures tails centred away from the origin.
    pub fn matched_two_term(grid: &Grid, values: &[f64], left_limit: f64, right_limit: f64, order: f64) -> Self {
        let n = values.len();
        let k = ((n - 1) / 8).max(1);
        let (l, li) = (grid.half_width(), -grid.x(k as isize));
        let solve = |v_out: f64, v_in: f64| {
            // a l^-p + b l^-p-1 = v_out, a li^-p + b li^-p-1 = v_in
            let (a11, a12, a21, a22) = (l.powf(-order), l.powf(-order - 1.0), li.powf(-order), li.powf(-order - 1.0));
            let det = a11 * a22 - a12 * a21;
            ((v_out * a22 - a12 * v_in) / det, (a11 * v_in - a21 * v_out) / det)
        };
        let (al, bl) = solve(values[0] - left_limit, values[k] - left_limit);
        let (ar, br) = solve(values[n - 1] - right_limit, values[n - 1 - k] - right_limit);
        Self { left_limit, right_limit, order, left_coeff: al, right_coeff: ar, left_coeff2: bl, right_coeff2: br }
    }

    /// Tail value at `x`; meaningful for `|x| >= L`.
    pub fn eval(&self, x: f64) -> f64 {
        let (lim, a, b) = if x < 0.0 {
            (self.left_limit, self.left_coeff, self.left_coeff2)
        } else {
            (self.right_limit, self.right_coeff, self.right_coeff2)
        };
        let r = x.abs().powf(-self.order);
        if b == 0.0 {
            lim + a * r
        } else {
            lim + (a + b / x.abs()) * r
        }
    }

    fn check(&self, grid: &Grid, values: &[f64]) -> Result<()> {
        if !(self.order > 0.0) {
            return Err(Error::Domain(format!("tail order {} must be positive", self.order)));
        }
        let l = grid.half_width();
        let sides = [("left", -l, values[0], self.left_limit), ("right", l, values[values.len() - 1], self.right_limit)];
        for (side, x, v, lim) in sides {
            let t = self.eval(x);
            let scale = 1f64.max(lim.abs()).max(v.abs());
            if (t - v).abs() > TAIL_MATCH_TOL * scale {
                return Err(Error::TailMismatch { side, grid_value: v, tail_value: t });
            }
        }
        Ok(())
    }
}

/// Samples on a grid plus an optional far-field model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Profile {
    pub grid: Grid,
    pub values: Vec<f64>,
    pub tail: Option<TailModel>,
}

impl Profile {
    pub fn new(grid: Grid, values: Vec<f64>, tail: Option<TailModel>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!("{} samples for {} nodes", values.len(), grid.len())));
        }
        if let Some(j) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("non-finite sample at node {j}")));
        }
        if let Some(t) = &tail {
            t.check(&grid, &values)?;
        }
        Ok(Self { grid, values, tail })
    }

    /// Profile whose tail coefficients are matched to the boundary samples.
    pub fn with_matched_tail(grid: Grid, values: Vec<f64>, left_limit: f64, right_limit: f64, order: f64) -> Result<Self> {
        let tail = TailModel::matched(&grid, &values, left_limit, right_limit, order);
        Self::new(grid, values, Some(tail))
    }

    pub fn from_fn(grid: Grid, tail: Option<TailModel>, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = grid.nodes().into_iter().map(f).collect();
        Self::new(grid, values, tail)
    }

    pub fn constant(grid: Grid, c: f64) -> Self {
        Self { grid, values: vec![c; grid.len()], tail: Some(TailModel::constant(c)) }
    }

    pub fn tail(&self) -> Result<&TailModel> {
        self.tail.as_ref().ok_or_else(|| Error::MissingTail("profile has no tail model".into()))
    }

    /// Value at lattice index `j`, taken from the tail model off the grid.
    pub fn lattice_value(&self, j: isize) -> f64 {
        if j >= 0 && (j as usize) < self.values.len() {
            self.values[j as usize]
        } else {
            match &self.tail {
                Some(t) => t.eval(self.grid.x(j)),
                None => self.values[j.clamp(0, self.values.len() as isize - 1) as usize],
            }
        }
    }

    /// Checks that samples are nondecreasing and lie in `[0, 1]`.
    pub fn check_monotone_layer(&self) -> Result<()> {
        for (j, w) in self.values.windows(2).enumerate() {
            if w[1] < w[0] {
                return Err(Error::Validation { assumption: "monotone", detail: format!("decrease at node {j}") });
            }
        }
        if self.values.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Validation { assumption: "range", detail: "sample outside [0, 1]".into() });
        }
        Ok(())
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Centered finite-difference derivative with a tail model matched to
    /// order `p + 1` and zero limits.
    pub fn derivative(&self) -> Result<Profile> {
        let tail = *self.tail()?;
        let h = self.grid.h();
        let n = self.values.len() as isize;
        let values: Vec<f64> = (0..n)
            .map(|j| {
                let f = |k: isize| self.lattice_value(j + k);
                (8.0 * (f(1) - f(-1)) - (f(2) - f(-2))) / (12.0 * h)
            })
            .collect();
        Profile::with_matched_tail(self.grid, values, 0.0, 0.0, tail.order + 1.0)
    }
}

/// Cubic interpolation inside the grid, tail evaluation outside.
pub fn interp_at(p: &Profile, x: f64) -> f64 {
    let l = p.grid.half_width();
    if x.abs() > l {
        if let Some(t) = &p.tail {
            return t.eval(x);
        }
    }
    let h = p.grid.h();
    let n = p.values.len();
    let pos = (x + l) / h;
    let j = (pos.floor() as isize).clamp(0, n as isize - 2);
    let t = pos - j as f64;
    if t == 0.0 {
        return p.lattice_value(j);
    }
    // Without a tail the stencil is shifted inward at the ends.
    let base = if p.tail.is_some() { j - 1 } else { (j - 1).clamp(0, (n as isize - 4).max(0)) };
    let f = [p.lattice_value(base), p.lattice_value(base + 1), p.lattice_value(base + 2), p.lattice_value(base + 3)];
    let u = pos - base as f64;
    let (t0, t1, t2, t3) = (u, u - 1.0, u - 2.0, u - 3.0);
    -f[0] * t1 * t2 * t3 / 6.0 + f[1] * t0 * t2 * t3 / 2.0 - f[2] * t0 * t1 * t3 / 2.0 + f[3] * t0 * t1 * t2 / 6.0
}

/// Lagrange interpolation through `2 * half` lattice values around `x`.
pub fn interp_lagrange(p: &Profile, x: f64, half: usize) -> f64 {
    let h = p.grid.h();
    let pos = (x + p.grid.half_width()) / h;
    let j = pos.floor() as isize;
    let t = pos - j as f64;
    if t == 0.0 {
        return p.lattice_value(j);
    }
    let lo = j - half as isize + 1;
    let pts = 2 * half as isize;
    let mut acc = 0.0;
    for a in 0..pts {
        let mut basis = 1.0;
        for b in 0..pts {
            if a != b {
                basis *= (t - (lo + b - j) as f64) / (a - b) as f64;
            }
        }
        acc += basis * p.lattice_value(lo + a);
    }
    acc
}

/// Integrand mode for [`integrate_line`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LineMode {
    Raw,
    Squared,
}

/// `∫ p` or `∫ p²` over the line: trapezoid on the grid plus the analytic tail.
pub fn integrate_line(p: &Profile, mode: LineMode) -> Result<f64> {
    let tail = p.tail()?;
    let h = p.grid.h();
    let l = p.grid.half_width();
    let f = |v: f64| if mode == LineMode::Squared { v * v } else { v };
    let n = p.values.len();
    let mut acc = 0.5 * (f(p.values[0]) + f(p.values[n - 1]));
    for v in &p.values[1..n - 1] {
        acc += f(*v);
    }
    acc *= h;
    let sides = [
        (tail.left_limit, tail.left_coeff, tail.left_coeff2),
        (tail.right_limit, tail.right_coeff, tail.right_coeff2),
    ];
    for (lim, a, b) in sides {
        if lim != 0.0 {
            return Err(Error::NonIntegrable(format!("tail limit {lim} is nonzero")));
        }
        // Terms c |x|^{-q} integrated over (L, ∞).
        let terms: Vec<(f64, f64)> = match mode {
            LineMode::Raw => vec![(a, tail.order), (b, tail.order + 1.0)],
            LineMode::Squared => vec![
                (a * a, 2.0 * tail.order),
                (2.0 * a * b, 2.0 * tail.order + 1.0),
                (b * b, 2.0 * tail.order + 2.0),
            ],
        };
        for (c, q) in terms {
            if c == 0.0 {
                continue;
            }
            if q <= 1.0 {
                return Err(Error::NonIntegrable(format!("tail decay exponent {q} <= 1")));
            }
            acc += c * l.powf(1.0 - q) / (q - 1.0);
        }
    }
    Ok(acc)
}
