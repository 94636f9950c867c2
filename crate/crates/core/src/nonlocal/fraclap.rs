use std::sync::{Arc, Mutex};

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::{check_order, Grid, Profile, TailModel};
use crate::quadrature::GaussRule;
use crate::{Error, Result};

/// Lattice nodes appended on each side and filled from the tail model.
const PAD: usize = 16;

/// Semi-analytic far-field coefficients for one tail order.
#[derive(Debug)]
struct FarAlgebraic {
    order: f64,
    left: Vec<f64>,
    right: Vec<f64>,
}

/// Fractional Laplacian on a fixed grid, with precomputed weights.
///
/// For node `x_i` the integral over `y ∈ (0, h)` uses the discrete curvature
/// times `∫_0^h y^{1-2s} dy`; the second difference is interpolated linearly
/// between lattice distances beyond `h` and integrated exactly against the
/// kernel; beyond the padded lattice the tail model is integrated
/// analytically (constant part) and by mapped Gauss-Legendre (algebraic part).
pub struct FracLap {
    grid: Grid,
    s: f64,
    m: usize,
    nfft: usize,
    c_near: f64,
    w: Vec<f64>,
    wright: Vec<f64>,
    prefix: Vec<f64>,
    kernel_hat: Vec<Complex64>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    mass_left: Vec<f64>,
    mass_right: Vec<f64>,
    far: Mutex<Vec<Arc<FarAlgebraic>>>,
}

impl std::fmt::Debug for FracLap {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FracLap").field("grid", &self.grid).field("s", &self.s).finish()
    }
}

impl FracLap {
    pub fn new(grid: &Grid, s: f64) -> Result<Self> {
        check_order(s)?;
        let n = grid.len();
        let m = n + 2 * PAD;
        let h = grid.h();
        let q = 2.0 * s;
        let scale = h.powf(-q);
        let rule = GaussRule::new(16);
        let ker = |t: f64| t.powf(-1.0 - q);
        let mut wright = vec![0.0; m];
        let mut wleft = vec![0.0; m];
        for k in 1..m {
            let kf = k as f64;
            wright[k] = scale * rule.integrate(kf, kf + 1.0, |t| (kf + 1.0 - t) * ker(t));
            if k >= 2 {
                wleft[k] = scale * rule.integrate(kf - 1.0, kf, |t| (t - kf + 1.0) * ker(t));
            }
        }
        let mut w = vec![0.0; m];
        let mut prefix = vec![0.0; m];
        for k in 1..m {
            w[k] = wleft[k] + wright[k];
            prefix[k] = prefix[k - 1] + w[k];
        }
        let nfft = (2 * m).next_power_of_two();
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(nfft);
        let inv = planner.plan_fft_inverse(nfft);
        let mut kernel_hat = vec![Complex64::new(0.0, 0.0); nfft];
        for k in 1..m {
            kernel_hat[k].re = w[k];
            kernel_hat[nfft - k].re = w[k];
        }
        fwd.process(&mut kernel_hat);
        let z_end = grid.x((n - 1 + PAD) as isize);
        let mut mass_left = vec![0.0; n];
        let mut mass_right = vec![0.0; n];
        for i in 0..n {
            let x = grid.x(i as isize);
            mass_right[i] = (z_end - x).powf(-q) / q;
            mass_left[i] = (z_end + x).powf(-q) / q;
        }
        Ok(Self {
            grid: *grid,
            s,
            m,
            nfft,
            c_near: scale / (2.0 - q),
            w,
            wright,
            prefix,
            kernel_hat,
            fwd,
            inv,
            mass_left,
            mass_right,
            far: Mutex::new(Vec::new()),
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn order(&self) -> f64 {
        self.s
    }

    /// Magnitude of the diagonal coefficient at node `i`.
    pub fn diagonal(&self, i: usize) -> f64 {
        let e = i + PAD;
        let (kl, kr) = (e, self.m - 1 - e);
        2.0 * self.c_near + self.prefix[kl] + self.prefix[kr] - self.wright[kl] - self.wright[kr]
            + self.mass_left[i]
            + self.mass_right[i]
    }

    /// Largest diagonal magnitude; bounds the absolute row sum by twice itself.
    pub fn diagonal_max(&self) -> f64 {
        (0..self.grid.len()).map(|i| self.diagonal(i)).fold(0.0, f64::max)
    }

    /// Eigenvalues of the circulant of size `size` built from the interior
    /// stencil of the operator, normalised so that constants map to zero.
    pub fn circulant_symbol(&self, size: usize) -> Vec<f64> {
        let half = (size / 2).min(self.m - 1);
        let mut c = vec![Complex64::new(0.0, 0.0); size];
        let mut diag = 0.0;
        for k in 1..half {
            let wk = self.w[k] + if k == 1 { self.c_near } else { 0.0 };
            c[k].re += wk;
            c[size - k].re += wk;
            diag += 2.0 * wk;
        }
        c[0].re = -diag;
        FftPlanner::new().plan_fft_forward(size).process(&mut c);
        c.iter().map(|z| z.re).collect()
    }

    fn far_algebraic(&self, order: f64) -> Arc<FarAlgebraic> {
        let mut cache = self.far.lock().expect("far-field cache poisoned");
        if let Some(f) = cache.iter().find(|f| f.order == order) {
            return f.clone();
        }
        let n = self.grid.len();
        let z_end = self.grid.x((n - 1 + PAD) as isize);
        let q = 2.0 * self.s;
        let rule = GaussRule::new(32);
        let mexp = (1.0 / (order + q)).ceil();
        let power = mexp * (order + q) - 1.0;
        // ∫_d^∞ (x+w)^{-p} w^{-1-2s} dw with w = d/τ^m.
        let j = |x: f64, d: f64| {
            d.powf(-q) * mexp * rule.integrate(0.0, 1.0, |tau| {
                let t = tau.powf(mexp);
                tau.powf(power) * (x * t + d).powf(-order)
            })
        };
        let mut left = vec![0.0; n];
        let mut right = vec![0.0; n];
        for i in 0..n {
            let x = self.grid.x(i as isize);
            right[i] = j(x, z_end - x);
            left[i] = j(-x, z_end + x);
        }
        let f = Arc::new(FarAlgebraic { order, left, right });
        cache.push(f.clone());
        f
    }

    /// `I_s` at every grid node for samples `values` with far field `tail`.
    pub fn apply_values(&self, values: &[f64], tail: &TailModel) -> Result<Vec<f64>> {
        let n = self.grid.len();
        if values.len() != n {
            return Err(Error::GridMismatch(format!("{} samples for {n} nodes", values.len())));
        }
        let m = self.m;
        let mut ext = vec![0.0; m];
        for (e, slot) in ext.iter_mut().enumerate() {
            let j = e as isize - PAD as isize;
            *slot = if j >= 0 && (j as usize) < n { values[j as usize] } else { tail.eval(self.grid.x(j)) };
        }
        let mut buf = vec![Complex64::new(0.0, 0.0); self.nfft];
        for (b, v) in buf.iter_mut().zip(&ext) {
            b.re = *v;
        }
        self.fwd.process(&mut buf);
        for (b, k) in buf.iter_mut().zip(&self.kernel_hat) {
            *b *= k;
        }
        self.inv.process(&mut buf);
        let norm = 1.0 / self.nfft as f64;
        let far = self.far_algebraic(tail.order);
        let far2 = (tail.left_coeff2 != 0.0 || tail.right_coeff2 != 0.0).then(|| self.far_algebraic(tail.order + 1.0));
        let mut out = vec![0.0; n];
        for i in 0..n {
            let e = i + PAD;
            let p = values[i];
            let (kl, kr) = (e, m - 1 - e);
            let near = self.c_near * (ext[e + 1] + ext[e - 1] - 2.0 * p);
            let lattice = buf[e].re * norm - (self.prefix[kl] + self.prefix[kr]) * p
                - self.wright[kl] * (ext[0] - p)
                - self.wright[kr] * (ext[m - 1] - p);
            let tail_part = (tail.right_limit - p) * self.mass_right[i]
                + (tail.left_limit - p) * self.mass_left[i]
                + tail.right_coeff * far.right[i]
                + tail.left_coeff * far.left[i];
            let tail_part = match &far2 {
                Some(f2) => tail_part + tail.right_coeff2 * f2.right[i] + tail.left_coeff2 * f2.left[i],
                None => tail_part,
            };
            out[i] = near + lattice + tail_part;
        }
        Ok(out)
    }

    /// `I_s p` as a profile with zero limits and a matched tail of order `2s`.
    pub fn apply(&self, p: &Profile) -> Result<Profile> {
        if p.grid != self.grid {
            return Err(Error::GridMismatch("profile grid differs from operator grid".into()));
        }
        let tail = p.tail()?;
        let out = self.apply_values(&p.values, tail)?;
        let tail = TailModel::matched(&self.grid, &out, 0.0, 0.0, 2.0 * self.s);
        Ok(Profile { grid: self.grid, values: out, tail: Some(tail) })
    }
}

/// One-shot `I_s p` on the profile's own grid.
pub fn frac_lap_apply(p: &Profile, s: f64) -> Result<Profile> {
    check_order(s)?;
    p.tail()?;
    FracLap::new(&p.grid, s)?.apply(p)
}
