use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Symmetric uniform grid `x_j = (j - c) h`, `c = (n - 1) / 2`, on `[-L, L]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    half_width: f64,
    n_points: usize,
}

impl Grid {
    pub fn new(half_width: f64, n_points: usize) -> Result<Self> {
        if !(half_width.is_finite() && half_width > 0.0) {
            return Err(Error::Domain(format!("grid half width {half_width} must be positive")));
        }
        if n_points < 3 || n_points % 2 == 0 {
            return Err(Error::Domain(format!("grid needs an odd number of points >= 3, got {n_points}")));
        }
        Ok(Self { half_width, n_points })
    }

    /// Grid on `[-L, L]` whose spacing does not exceed `h_max`.
    pub fn with_max_spacing(half_width: f64, h_max: f64) -> Result<Self> {
        if !(h_max > 0.0) {
            return Err(Error::Domain(format!("spacing {h_max} must be positive")));
        }
        let half = (half_width / h_max - 1e-9).ceil().max(1.0) as usize;
        Self::new(half_width, 2 * half + 1)
    }

    /// Default grid for unscaled fields: `L = 60`, 6001 points.
    pub fn default_unscaled() -> Self {
        Self { half_width: 60.0, n_points: 6001 }
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn len(&self) -> usize {
        self.n_points
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn h(&self) -> f64 {
        2.0 * self.half_width / (self.n_points - 1) as f64
    }

    pub fn center(&self) -> usize {
        (self.n_points - 1) / 2
    }

    /// Coordinate of (possibly out-of-range) lattice index `j`.
    pub fn x(&self, j: isize) -> f64 {
        (j - self.center() as isize) as f64 * self.h()
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n_points as isize).map(|j| self.x(j)).collect()
    }

    /// Same half width with the spacing divided by `factor`.
    pub fn refined(&self, factor: usize) -> Self {
        Self { half_width: self.half_width, n_points: (self.n_points - 1) * factor + 1 }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nodes_are_symmetric_with_exact_zero() {
        let g = Grid::new(60.0, 6001).unwrap();
        let x = g.nodes();
        assert_eq!(x[3000], 0.0);
        assert!((g.h() - 0.02).abs() < 1e-15);
        for j in 0..3000 {
            assert_eq!(x[j], -x[6000 - j]);
            assert!(x[j] < x[j + 1]);
        }
        assert!((x[0] + 60.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_even_or_tiny() {
        assert!(Grid::new(1.0, 4).is_err());
        assert!(Grid::new(-1.0, 5).is_err());
        let g = Grid::with_max_spacing(2.0, 0.0125).unwrap();
        assert!(g.h() <= 0.0125 + 1e-15);
    }
}
