//! The heteroclinic layer `u`, the constants `γ`, `η` and the corrector `ψ`.

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::Serialize;

use crate::linsolve::gmres;
use crate::nonlocal::{check_order, integrate_line, interp_at, FracLap, Grid, LineMode, Profile, TailModel};
use crate::potential::Potential;
use crate::{Error, Result};

/// Knobs for [`compute_layer_with`].
#[derive(Debug, Clone, Copy)]
pub struct LayerOptions {
    /// Stop when `sup |I_s u - W'(u)|` falls below this.
    pub tol: f64,
    pub max_iter: usize,
    /// Width `w` of the initial step `1/2 + arctan(x/w)/π`.
    pub initial_width: f64,
    /// Shift of the initial step; removed by re-centering.
    pub initial_shift: f64,
}

impl Default for LayerOptions {
    fn default() -> Self {
        Self { tol: 1e-6, max_iter: 400_000, initial_width: 1.0, initial_shift: 0.0 }
    }
}

/// Converged layer with its derivative and constants.
#[derive(Debug, Clone, Serialize)]
pub struct LayerSolution {
    pub s: f64,
    pub beta: f64,
    pub u: Profile,
    pub u_prime: Profile,
    pub gamma: f64,
    pub eta: f64,
    pub kappa_fit: f64,
    pub residual: f64,
    pub iterations: usize,
}

impl LayerSolution {
    pub fn u_at(&self, x: f64) -> f64 {
        interp_at(&self.u, x)
    }

    pub fn u_prime_at(&self, x: f64) -> f64 {
        interp_at(&self.u_prime, x)
    }
}

/// Position of the 1/2-level of a nondecreasing profile.
fn half_level(u: &Profile) -> Option<f64> {
    let j = u.values.windows(2).position(|w| w[0] <= 0.5 && w[1] > 0.5)?;
    let (mut a, mut b) = (u.grid.x(j as isize), u.grid.x(j as isize + 1));
    for _ in 0..60 {
        let m = 0.5 * (a + b);
        if interp_at(u, m) <= 0.5 {
            a = m;
        } else {
            b = m;
        }
    }
    Some(0.5 * (a + b))
}

/// Solves `I_s u = W'(u)` with the default options.
pub fn compute_layer(s: f64, potential: &dyn Potential, grid: &Grid) -> Result<LayerSolution> {
    compute_layer_with(s, potential, grid, LayerOptions::default())
}

/// Parabolic relaxation of `u_t = I_s u - W'(u)` with re-centering.
pub fn compute_layer_with(s: f64, potential: &dyn Potential, grid: &Grid, opts: LayerOptions) -> Result<LayerSolution> {
    check_order(s)?;
    let beta = crate::potential::validate_potential(potential)?.beta;
    let op = FracLap::new(grid, s)?;
    let p = 2.0 * s;
    let w2max = (0..=1000).map(|k| potential.d2w(k as f64 / 1000.0).abs()).fold(0.0, f64::max);
    let dtau = 0.5 / (w2max + op.diagonal_max());
    let nodes = grid.nodes();
    let mut u: Vec<f64> = nodes
        .iter()
        .map(|x| 0.5 + ((x - opts.initial_shift) / opts.initial_width).atan() / std::f64::consts::PI)
        .collect();
    let mut residual = f64::INFINITY;
    for it in 0..opts.max_iter {
        let tail = TailModel::matched(grid, &u, 0.0, 1.0, p);
        let lap = op.apply_values(&u, &tail)?;
        let mut sup: f64 = 0.0;
        let r: Vec<f64> = lap
            .iter()
            .zip(&u)
            .map(|(l, v)| {
                let r = l - potential.dw(*v);
                sup = sup.max(r.abs());
                r
            })
            .collect();
        residual = sup;
        if sup <= opts.tol {
            return finish(s, beta, potential, *grid, u, residual, it);
        }
        for (v, ri) in u.iter_mut().zip(&r) {
            *v += dtau * ri;
        }
        if let Some(j) = u.windows(2).position(|w| w[1] < w[0]) {
            return Err(Error::MonotonicityLost { step: it, node: j });
        }
        let prof = Profile { grid: *grid, values: u.clone(), tail: Some(TailModel::matched(grid, &u, 0.0, 1.0, p)) };
        let shift = half_level(&prof).ok_or_else(|| Error::Domain("layer lost its 1/2 crossing".into()))?;
        if shift.abs() > 1e-14 {
            u = nodes.iter().map(|x| interp_at(&prof, x + shift)).collect();
        }
    }
    Err(Error::NoConvergence { iterations: opts.max_iter, residual })
}

fn finish(s: f64, beta: f64, _potential: &dyn Potential, grid: Grid, u: Vec<f64>, residual: f64, iterations: usize) -> Result<LayerSolution> {
    let u = Profile::with_matched_tail(grid, u, 0.0, 1.0, 2.0 * s)?;
    u.check_monotone_layer()?;
    let u_prime = u.derivative()?;
    let gamma = 1.0 / integrate_line(&u_prime, LineMode::Squared)?;
    let eta = 1.0 / (gamma * beta);
    let mut layer = LayerSolution { s, beta, u, u_prime, gamma, eta, kappa_fit: f64::NAN, residual, iterations };
    if let Ok(fit) = fit_tail(&layer) {
        layer.kappa_fit = fit.kappa_fit;
    }
    Ok(layer)
}

/// `(β, γ, η)` of a converged layer.
pub fn layer_constants(layer: &LayerSolution) -> (f64, f64, f64) {
    (layer.beta, layer.gamma, layer.eta)
}

/// Least-squares description of the layer's far field.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct TailFit {
    /// Fitted `A` in `1 - u(x) ≈ A x^{-2s}`; theory gives `1/(2sβ)`.
    pub leading_coeff: f64,
    /// Fitted exponent of the remainder after the leading term.
    pub kappa_fit: f64,
}

fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    let slope = sxy / sxx;
    let r2 = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    (slope, my - slope * mx, r2)
}

/// Fits the remainder `u - H + x/(2sβ|x|^{2s+1})` on `[5, L/2]` (both sides
/// pooled by symmetry) and the leading coefficient of `1 - u`.
pub fn fit_tail(layer: &LayerSolution) -> Result<TailFit> {
    let s = layer.s;
    let q = 2.0 * s;
    let theory = 1.0 / (q * layer.beta);
    let grid = layer.u.grid;
    let hi = 0.5 * grid.half_width();
    let mut lx = Vec::new();
    let mut lr = Vec::new();
    let mut samples = Vec::new();
    for (i, x) in grid.nodes().into_iter().enumerate() {
        if x < 5.0 || x > hi {
            continue;
        }
        let right = layer.u.values[i];
        let left = layer.u.values[grid.len() - 1 - i];
        let rem = 0.5 * ((right - 1.0 + theory * x.powf(-q)) - (left - theory * x.powf(-q)));
        samples.push((x, 0.5 * ((1.0 - right) + left) * x.powf(q)));
        if rem != 0.0 {
            lx.push(x.ln());
            lr.push(rem.abs().ln());
        }
    }
    if lx.len() < 3 {
        return Err(Error::Fit("tail fit window [5, L/2] is empty".into()));
    }
    let (slope, _, _) = linear_fit(&lx, &lr);
    let kappa = -slope;
    let zs: Vec<f64> = samples.iter().map(|(x, _)| x.powf(q - kappa)).collect();
    let ys: Vec<f64> = samples.iter().map(|(_, y)| *y).collect();
    let (_, intercept, _) = linear_fit(&zs, &ys);
    Ok(TailFit { leading_coeff: intercept, kappa_fit: kappa })
}

/// Exponent `a` of a fitted power law `|f(x)| ≈ C x^{-a}` on `[lo, hi]`.
pub fn fit_decay_exponent(p: &Profile, lo: f64, hi: f64) -> Result<f64> {
    let mut lx = Vec::new();
    let mut ly = Vec::new();
    for (i, x) in p.grid.nodes().into_iter().enumerate() {
        if x >= lo && x <= hi && p.values[i] != 0.0 {
            lx.push(x.ln());
            ly.push(p.values[i].abs().ln());
        }
    }
    if lx.len() < 3 {
        return Err(Error::Fit(format!("decay window [{lo}, {hi}] is empty")));
    }
    Ok(-linear_fit(&lx, &ly).0)
}

/// Solution of the linearised layer equation.
#[derive(Debug, Clone, Serialize)]
pub struct Corrector {
    pub psi: Profile,
    /// `⟨ψ, u'⟩` after normalisation.
    pub normalization: f64,
    /// `⟨u', RHS⟩`, the discrete solvability defect.
    pub solvability: f64,
    /// `sup |(I_s - W''(u))ψ - RHS|`.
    pub residual: f64,
    pub iterations: usize,
}

impl Corrector {
    pub fn psi_at(&self, x: f64) -> f64 {
        interp_at(&self.psi, x)
    }
}

fn inner(h: f64, a: &[f64], b: &[f64]) -> f64 {
    h * a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>()
}

/// Solves `(I_s - W''(u))ψ = u' + η(W''(u) - W''(0))` with zero limits and
/// `⟨ψ, u'⟩ = 0`.
///
/// The system is bordered by the kernel direction `u'` and solved with
/// GMRES, preconditioned by the circulant of `I_s - β`.
pub fn compute_corrector(layer: &LayerSolution, s: f64, potential: &dyn Potential) -> Result<Corrector> {
    check_order(s)?;
    let grid = layer.u.grid;
    let n = grid.len();
    let h = grid.h();
    let beta = layer.beta;
    let order = 1.0 + 2.0 * s;
    let op = FracLap::new(&grid, s)?;
    let w2: Vec<f64> = layer.u.values.iter().map(|v| potential.d2w(*v)).collect();
    let up = &layer.u_prime.values;
    let rhs: Vec<f64> = up.iter().zip(&w2).map(|(d, w)| d + layer.eta * (w - beta)).collect();
    let unorm = inner(h, up, up).sqrt();
    let kdir: Vec<f64> = up.iter().map(|d| d / unorm).collect();
    let solvability = inner(h, up, &rhs);

    let apply_a = |psi: &[f64]| -> Vec<f64> {
        let tail = TailModel::matched(&grid, psi, 0.0, 0.0, order);
        let lap = op.apply_values(psi, &tail).expect("grid sizes agree");
        lap.iter().zip(psi).zip(&w2).map(|((l, p), w)| l - w * p).collect()
    };
    let bordered = |z: &[f64]| -> Vec<f64> {
        let (psi, lam) = (&z[..n], z[n]);
        let mut out = apply_a(psi);
        for (o, k) in out.iter_mut().zip(&kdir) {
            *o += lam * k;
        }
        out.push(inner(h, &kdir, psi));
        out
    };
    let size = (2 * n).next_power_of_two();
    let symbol: Vec<f64> = op.circulant_symbol(size).into_iter().map(|l| l - beta).collect();
    let mut planner = FftPlanner::new();
    let (fwd, inv) = (planner.plan_fft_forward(size), planner.plan_fft_inverse(size));
    let precond = |z: &[f64]| -> Vec<f64> {
        let mut buf = vec![Complex64::new(0.0, 0.0); size];
        for (b, v) in buf.iter_mut().zip(&z[..n]) {
            b.re = *v;
        }
        fwd.process(&mut buf);
        for (b, l) in buf.iter_mut().zip(&symbol) {
            *b /= *l;
        }
        inv.process(&mut buf);
        let mut out: Vec<f64> = buf[..n].iter().map(|b| b.re / size as f64).collect();
        out.push(z[n]);
        out
    };
    let mut b = rhs.clone();
    b.push(0.0);
    let sol = gmres(bordered, precond, &b, 120, 3000, 1e-12);
    if !sol.converged {
        return Err(Error::NoConvergence { iterations: sol.iterations, residual: sol.relative_residual });
    }
    let mut psi = sol.x[..n].to_vec();
    let c = inner(h, &psi, up) / inner(h, up, up);
    for (p, d) in psi.iter_mut().zip(up) {
        *p -= c * d;
    }
    let res = apply_a(&psi);
    let residual = res.iter().zip(&rhs).fold(0.0f64, |m, (a, r)| m.max((a - r).abs()));
    let normalization = inner(h, &psi, up);
    let psi = Profile::with_matched_tail(grid, psi, 0.0, 0.0, order)?;
    Ok(Corrector { psi, normalization, solvability, residual, iterations: sol.iterations })
}
