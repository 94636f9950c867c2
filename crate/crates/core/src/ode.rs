//! Adaptive Dormand-Prince 5(4) integration with event localisation.

use crate::{Error, Result};

/// Right-hand side of `y' = f(t, y)`. Returns `false` when `y` is outside the
/// domain of `f`; the driver then shrinks the step.
pub trait OdeSystem {
    fn dim(&self) -> usize;
    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]) -> bool;
}

#[derive(Debug, Clone, Copy)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    pub h0: f64,
    pub max_steps: usize,
    /// Time tolerance of event bisection.
    pub event_tol: f64,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self { rtol: 1e-12, atol: 1e-15, h0: 1e-6, max_steps: 2_000_000, event_tol: 1e-10 }
    }
}

const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// One Dormand-Prince step; `None` if a stage left the domain.
/// Returns the new state and the scaled error norm.
pub fn dopri_step<S: OdeSystem + ?Sized>(sys: &S, t: f64, y: &[f64], h: f64, opts: &OdeOptions) -> Option<(Vec<f64>, f64)> {
    let n = y.len();
    let mut k = vec![vec![0.0; n]; 7];
    let mut tmp = vec![0.0; n];
    if !sys.rhs(t, y, &mut k[0]) {
        return None;
    }
    for stage in 1..7 {
        for i in 0..n {
            let mut acc = 0.0;
            for j in 0..stage {
                acc += A[stage][j] * k[j][i];
            }
            tmp[i] = y[i] + h * acc;
        }
        let mut ks = vec![0.0; n];
        if !sys.rhs(t + C[stage] * h, &tmp, &mut ks) || ks.iter().any(|v| !v.is_finite()) {
            return None;
        }
        k[stage] = ks;
    }
    // Stage 7 is evaluated at the 5th-order solution, which is `tmp`.
    let mut err = 0.0;
    for i in 0..n {
        let mut e = 0.0;
        for j in 0..7 {
            e += E[j] * k[j][i];
        }
        let sc = opts.atol + opts.rtol * y[i].abs().max(tmp[i].abs());
        err += (h * e / sc).powi(2);
    }
    Some((tmp, (err / n as f64).sqrt()))
}

/// Accepted states plus the optional event.
#[derive(Debug, Clone)]
pub struct OdeRun {
    pub ts: Vec<f64>,
    pub ys: Vec<Vec<f64>>,
    pub event: Option<(f64, Vec<f64>)>,
}

/// Integrates from `t0` to `t_end`, landing exactly on every time in
/// `outputs`. If `event` is given, stops at the first time its value drops to
/// zero or below, localised by bisection on the step length.
pub fn solve<S: OdeSystem + ?Sized>(
    sys: &S,
    t0: f64,
    y0: &[f64],
    t_end: f64,
    outputs: &[f64],
    event: Option<&dyn Fn(f64, &[f64]) -> f64>,
    opts: &OdeOptions,
) -> Result<OdeRun> {
    let mut stops: Vec<f64> = outputs.iter().copied().filter(|t| *t > t0 && *t < t_end).collect();
    stops.push(t_end);
    stops.sort_by(f64::total_cmp);
    stops.dedup();
    let mut run = OdeRun { ts: vec![t0], ys: vec![y0.to_vec()], event: None };
    let (mut t, mut y) = (t0, y0.to_vec());
    let mut h = opts.h0;
    let mut next = 0;
    let mut steps = 0;
    while next < stops.len() {
        let target = stops[next];
        let hs = h.min(target - t);
        let last = hs >= target - t;
        if hs <= 1e-15 * t.abs().max(1.0) && !last {
            return Err(Error::StepUnderflow { t, h: hs, state: y });
        }
        steps += 1;
        if steps > opts.max_steps {
            return Err(Error::StepUnderflow { t, h: hs, state: y });
        }
        let Some((y1, err)) = dopri_step(sys, t, &y, hs, opts) else {
            h = hs * 0.25;
            if h < 1e-16 * t.abs().max(1.0) {
                return Err(Error::StepUnderflow { t, h, state: y });
            }
            continue;
        };
        if err > 1.0 {
            h = hs * (0.9 * err.powf(-0.2)).max(0.2);
            continue;
        }
        if let Some(g) = event {
            if g(t + hs, &y1) <= 0.0 {
                let (mut lo, mut hi) = (0.0, hs);
                let mut y_hi = y1.clone();
                while hi - lo > opts.event_tol {
                    let mid = 0.5 * (lo + hi);
                    match dopri_step(sys, t, &y, mid, opts) {
                        Some((ym, _)) if g(t + mid, &ym) > 0.0 => lo = mid,
                        Some((ym, _)) => {
                            hi = mid;
                            y_hi = ym;
                        }
                        None => hi = mid,
                    }
                }
                let (t_ev, y_ev) = match dopri_step(sys, t, &y, hi, opts) {
                    Some((ye, _)) => (t + hi, ye),
                    None => (t + hi, y_hi),
                };
                run.ts.push(t_ev);
                run.ys.push(y_ev.clone());
                run.event = Some((t_ev, y_ev));
                return Ok(run);
            }
        }
        let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
        if last {
            t = target;
            next += 1;
        } else {
            t += hs;
        }
        y = y1;
        run.ts.push(t);
        run.ys.push(y.clone());
        if !last {
            h = hs * fac;
        }
    }
    Ok(run)
}
