//! Time integration of `ε v_t = I_s v − ε^{−2s} W'(v) + σ`.

use std::sync::Arc;

use serde::Serialize;

use crate::layer::LayerSolution;
use crate::nonlocal::{check_order, interp_at, FracLap, Grid, Profile, TailModel};
use crate::potential::{Potential, Stress, ZeroStress};
use crate::{Error, Result};

/// Blow-up threshold on `|v|`.
pub const BLOW_UP: f64 = 10.0;

/// Pointwise update rule given `I_s v` at the node.
pub trait TimeStepper: Send + Sync + std::fmt::Debug {
    fn name(&self) -> &'static str;
    /// New value from `v`, `lap = I_s v` and `sigma = σ(t, x)`.
    fn step(&self, v: f64, lap: f64, sigma: f64, dt: f64, eps: f64, s: f64, potential: &dyn Potential) -> f64;
}

/// First-order IMEX: `−βv/ε^{2s+1}` implicit, everything else explicit.
#[derive(Debug, Clone, Copy, Default)]
pub struct Imex;

impl TimeStepper for Imex {
    fn name(&self) -> &'static str {
        "imex"
    }

    fn step(&self, v: f64, lap: f64, sigma: f64, dt: f64, eps: f64, s: f64, potential: &dyn Potential) -> f64 {
        let beta = potential.beta();
        let stiff = dt / eps.powf(2.0 * s + 1.0);
        (v + dt / eps * (lap + sigma) - stiff * (potential.dw(v) - beta * v)) / (1.0 + stiff * beta)
    }
}

/// Exponential Euler: the linear part `−βv/ε^{2s+1}` is propagated exactly.
#[derive(Debug, Clone, Copy, Default)]
pub struct ExpEuler;

impl TimeStepper for ExpEuler {
    fn name(&self) -> &'static str {
        "exp_euler"
    }

    fn step(&self, v: f64, lap: f64, sigma: f64, dt: f64, eps: f64, s: f64, potential: &dyn Potential) -> f64 {
        let beta = potential.beta();
        let lam = beta / eps.powf(2.0 * s + 1.0);
        let forcing = (lap + sigma) / eps - (potential.dw(v) - beta * v) / eps.powf(2.0 * s + 1.0);
        let decay = (-lam * dt).exp();
        decay * v + (-(-lam * dt).exp_m1()) / lam * forcing
    }
}

pub fn stepper_names() -> &'static [&'static str] {
    &["imex", "exp_euler"]
}

pub fn stepper_by_name(name: &str) -> Result<Arc<dyn TimeStepper>> {
    match name {
        "imex" | "default" => Ok(Arc::new(Imex)),
        "exp_euler" => Ok(Arc::new(ExpEuler)),
        other => Err(Error::Config(format!("unknown time stepper `{other}` (known: {})", stepper_names().join(", ")))),
    }
}

#[derive(Debug, Clone)]
pub struct EvolutionConfig {
    pub epsilon: f64,
    pub s: f64,
    pub potential: Arc<dyn Potential>,
    pub stress: Arc<dyn Stress>,
    pub grid: Grid,
    pub t_end: f64,
    /// Multiplies the default step.
    pub dt_scale: f64,
    pub snapshot_dt: f64,
    pub series_dt: f64,
    pub stepper: Arc<dyn TimeStepper>,
    /// Level whose crossings are counted every step.
    pub level: f64,
    /// When set, the series also records the distance to the best translate.
    pub reference: Option<Arc<LayerSolution>>,
}

impl EvolutionConfig {
    pub fn new(epsilon: f64, s: f64, potential: Arc<dyn Potential>, grid: Grid, t_end: f64) -> Self {
        Self {
            epsilon,
            s,
            potential,
            stress: Arc::new(ZeroStress),
            grid,
            t_end,
            dt_scale: 1.0,
            snapshot_dt: t_end / 20.0,
            series_dt: t_end / 400.0,
            stepper: Arc::new(Imex),
            level: 0.5,
            reference: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |detail: String| Err(Error::Validation { assumption: "evolution config", detail });
        check_order(self.s)?;
        if !(self.epsilon > 0.0 && self.epsilon <= 1.0) {
            return bad(format!("epsilon = {} not in (0, 1]", self.epsilon));
        }
        check_resolution(&self.grid, self.epsilon)?;
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return bad(format!("t_end = {}", self.t_end));
        }
        if !(self.dt_scale > 0.0 && self.dt_scale <= 1.0) {
            return bad(format!("dt_scale = {} not in (0, 1]", self.dt_scale));
        }
        if !(self.snapshot_dt > 0.0 && self.series_dt > 0.0) {
            return bad("snapshot and series cadences must be positive".into());
        }
        Ok(())
    }

    /// `min(ε^{2s+1}/β, ε/max_i diag_i) / 4`, times `dt_scale`.
    pub fn time_step(&self, op: &FracLap) -> f64 {
        let beta = self.potential.beta();
        let a = 0.25 * self.epsilon.powf(2.0 * self.s + 1.0) / beta;
        let b = 0.25 * self.epsilon / op.diagonal_max();
        a.min(b) * self.dt_scale
    }
}

fn check_resolution(grid: &Grid, eps: f64) -> Result<()> {
    if grid.h() > eps / 4.0 * (1.0 + 1e-12) {
        return Err(Error::Validation {
            assumption: "grid resolves epsilon",
            detail: format!("h = {} > epsilon/4 = {}", grid.h(), eps / 4.0),
        });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DatumKind {
    Two,
    Three,
}

/// `ε^{2s}σ(0,x)/β + Σ u(ζ_i(x − x_i⁰)/ε) − 1` with limits `0, 0` (two
/// layers) or `0, 1` (three layers) plus the stress shift.
pub fn build_initial(
    kind: DatumKind,
    eps: f64,
    positions: &[f64],
    layer: &LayerSolution,
    stress: &dyn Stress,
    grid: &Grid,
) -> Result<Profile> {
    check_resolution(grid, eps)?;
    let n = match kind {
        DatumKind::Two => 2,
        DatumKind::Three => 3,
    };
    if positions.len() != n || positions.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Validation {
            assumption: "initial positions",
            detail: format!("need {n} strictly increasing positions, got {positions:?}"),
        });
    }
    let shift = eps.powf(2.0 * layer.s) / layer.beta;
    let values: Vec<f64> = grid
        .nodes()
        .iter()
        .map(|x| {
            let mut v = shift * stress.sigma(0.0, *x) - 1.0;
            for (i, xi) in positions.iter().enumerate() {
                let z = if i % 2 == 0 { 1.0 } else { -1.0 };
                v += layer.u_at(z * (x - xi) / eps);
            }
            v
        })
        .collect();
    let l = grid.half_width();
    let right = match kind {
        DatumKind::Two => 0.0,
        DatumKind::Three => 1.0,
    };
    let tail = TailModel::matched_two_term(
        grid,
        &values,
        shift * stress.sigma(0.0, -l),
        right + shift * stress.sigma(0.0, l),
        2.0 * layer.s,
    );
    Profile::new(*grid, values, Some(tail))
}

/// Crossings of `level` with orientation `+1` (upward) or `−1`.
pub fn crossings(p: &Profile, level: f64) -> Vec<(f64, i8)> {
    let mut out = Vec::new();
    for (j, w) in p.values.windows(2).enumerate() {
        let (a, b) = (w[0] - level, w[1] - level);
        if (a < 0.0) != (b < 0.0) {
            let x0 = p.grid.x(j as isize);
            let x = x0 + p.grid.h() * a / (a - b);
            out.push((x, if b > a { 1 } else { -1 }));
        }
    }
    out
}

fn crossing_count(values: &[f64], level: f64) -> usize {
    values.windows(2).filter(|w| (w[0] < level) != (w[1] < level)).count()
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct SeriesPoint {
    pub t: f64,
    pub sup_norm: f64,
    pub layer_distance: Option<f64>,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct CountEvent {
    pub t: f64,
    pub from: usize,
    pub to: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct EvolutionResult {
    pub epsilon: f64,
    pub s: f64,
    pub beta: f64,
    pub dt: f64,
    pub steps: usize,
    pub level: f64,
    pub snapshot_times: Vec<f64>,
    pub snapshots: Vec<Profile>,
    pub series: Vec<SeriesPoint>,
    /// Changes of the crossing count of `level`, resolved to one step.
    pub events: Vec<CountEvent>,
}

impl EvolutionResult {
    pub fn last(&self) -> &Profile {
        self.snapshots.last().expect("at least the initial snapshot")
    }

    /// First time the crossing count drops below its initial value.
    pub fn first_drop(&self) -> Option<f64> {
        self.events.iter().find(|e| e.to < e.from).map(|e| e.t)
    }
}

fn sup_with_tail(p: &Profile) -> f64 {
    let mut m = p.sup_norm();
    if let Some(t) = &p.tail {
        m = m.max(t.left_limit.abs()).max(t.right_limit.abs());
    }
    m
}

/// Advances `v0` to `cfg.t_end`.
pub fn evolve(v0: &Profile, cfg: &EvolutionConfig) -> Result<EvolutionResult> {
    cfg.validate()?;
    if v0.grid != cfg.grid {
        return Err(Error::GridMismatch("initial datum grid differs from the configured grid".into()));
    }
    let tail0 = *v0.tail()?;
    let grid = cfg.grid;
    let op = FracLap::new(&grid, cfg.s)?;
    let pot = cfg.potential.as_ref();
    let stress = cfg.stress.as_ref();
    let order = 2.0 * cfg.s;
    let nsteps = (cfg.t_end / cfg.time_step(&op)).ceil().max(1.0) as usize;
    let dt = cfg.t_end / nsteps as f64;
    let nodes = grid.nodes();
    let l = grid.half_width();

    let mut v = v0.values.clone();
    let (mut ll, mut lr) = (tail0.left_limit, tail0.right_limit);
    let snap_every = ((cfg.snapshot_dt / dt).round() as usize).max(1);
    let series_every = ((cfg.series_dt / dt).round() as usize).max(1);
    let mut res = EvolutionResult {
        epsilon: cfg.epsilon,
        s: cfg.s,
        beta: pot.beta(),
        dt,
        steps: nsteps,
        level: cfg.level,
        snapshot_times: vec![],
        snapshots: vec![],
        series: vec![],
        events: vec![],
    };
    let record = |res: &mut EvolutionResult, t: f64, p: &Profile, snap: bool, series: bool| {
        if series {
            let layer_distance = cfg.reference.as_ref().and_then(|layer| best_translate(p, layer, cfg.epsilon).ok().map(|f| f.1));
            res.series.push(SeriesPoint { t, sup_norm: sup_with_tail(p), layer_distance });
        }
        if snap {
            res.snapshot_times.push(t);
            res.snapshots.push(p.clone());
        }
    };
    let prof = |v: &[f64], ll: f64, lr: f64| Profile {
        grid,
        values: v.to_vec(),
        tail: Some(TailModel::matched_two_term(&grid, v, ll, lr, order)),
    };
    record(&mut res, 0.0, &prof(&v, ll, lr), true, true);
    let mut count = crossing_count(&v, cfg.level);
    for n in 0..nsteps {
        let t = n as f64 * dt;
        let tail = TailModel::matched_two_term(&grid, &v, ll, lr, order);
        let lap = op.apply_values(&v, &tail)?;
        for ((vi, li), x) in v.iter_mut().zip(&lap).zip(&nodes) {
            let sig = if stress.is_zero() { 0.0 } else { stress.sigma(t, *x) };
            *vi = cfg.stepper.step(*vi, *li, sig, dt, cfg.epsilon, cfg.s, pot);
        }
        let (sl, sr) = if stress.is_zero() { (0.0, 0.0) } else { (stress.sigma(t, -l), stress.sigma(t, l)) };
        ll = cfg.stepper.step(ll, 0.0, sl, dt, cfg.epsilon, cfg.s, pot);
        lr = cfg.stepper.step(lr, 0.0, sr, dt, cfg.epsilon, cfg.s, pot);
        let t1 = (n + 1) as f64 * dt;
        if let Some(bad) = v.iter().copied().chain([ll, lr]).find(|x| !(x.abs() <= BLOW_UP)) {
            return Err(Error::BlowUp { t: t1, value: bad });
        }
        let c = crossing_count(&v, cfg.level);
        if c != count {
            res.events.push(CountEvent { t: t1, from: count, to: c });
            count = c;
        }
        let last = n + 1 == nsteps;
        let snap = (n + 1) % snap_every == 0 || last;
        let series = (n + 1) % series_every == 0 || last;
        if snap || series {
            record(&mut res, t1, &prof(&v, ll, lr), snap, series);
        }
    }
    Ok(res)
}

#[derive(Debug, Clone, Serialize)]
pub struct LevelEntry {
    pub t: f64,
    pub crossings: Vec<(f64, i8)>,
}

#[derive(Debug, Clone, Serialize)]
pub struct LevelTrack {
    pub level: f64,
    pub entries: Vec<LevelEntry>,
    /// Count changes between consecutive snapshots, stamped with the later time.
    pub events: Vec<CountEvent>,
}

pub fn track_levels(result: &EvolutionResult, level: f64) -> LevelTrack {
    let mut track = LevelTrack { level, entries: vec![], events: vec![] };
    for (t, p) in result.snapshot_times.iter().zip(&result.snapshots) {
        let c = crossings(p, level);
        if let Some(prev) = track.entries.last() {
            if prev.crossings.len() != c.len() {
                track.events.push(CountEvent { t: *t, from: prev.crossings.len(), to: c.len() });
            }
        }
        track.entries.push(LevelEntry { t: *t, crossings: c });
    }
    track
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct DecayFit {
    pub t0: f64,
    pub t1: f64,
    pub rate: f64,
    pub r_squared: f64,
    /// `β/(2ε^{2s+1})`.
    pub reference: f64,
    /// `r ε^{2s+1}/β`.
    pub ratio: f64,
}

/// Least-squares slope of `log sup|v|` over the series points in `[t_start, t_stop]`.
pub fn fit_decay_window(result: &EvolutionResult, t_start: f64, t_stop: f64) -> Result<DecayFit> {
    let pts: Vec<(f64, f64)> = result
        .series
        .iter()
        .filter(|p| p.t >= t_start && p.t <= t_stop)
        .map(|p| (p.t, p.sup_norm))
        .collect();
    if pts.len() < 3 {
        return Err(Error::Fit(format!("only {} series points in the window", pts.len())));
    }
    if let Some((t, v)) = pts.iter().find(|p| !(p.1 > 0.0)) {
        return Err(Error::Fit(format!("non-positive sup norm {v} at t = {t}")));
    }
    let (slope, r2) = linear_fit(pts.iter().map(|(t, v)| (*t, v.ln())));
    let scale = result.epsilon.powf(2.0 * result.s + 1.0);
    Ok(DecayFit {
        t0: pts[0].0,
        t1: pts[pts.len() - 1].0,
        rate: -slope,
        r_squared: r2,
        reference: result.beta / (2.0 * scale),
        ratio: -slope * scale / result.beta,
    })
}

/// [`fit_decay_window`] up to the end of the run.
pub fn fit_decay(result: &EvolutionResult, t_start: f64) -> Result<DecayFit> {
    fit_decay_window(result, t_start, f64::INFINITY)
}

/// Slope and `R²` of a least-squares line.
pub fn linear_fit(pts: impl Iterator<Item = (f64, f64)> + Clone) -> (f64, f64) {
    let n = pts.clone().count() as f64;
    let (sx, sy) = pts.clone().fold((0.0, 0.0), |a, (x, y)| (a.0 + x, a.1 + y));
    let (mx, my) = (sx / n, sy / n);
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in pts {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
        syy += (y - my) * (y - my);
    }
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    (slope, r2)
}

/// Translate `a` minimising `sup_x |p(x) − u((x − a)/ε)|` and the minimum.
pub fn best_translate(p: &Profile, layer: &LayerSolution, eps: f64) -> Result<(f64, f64)> {
    let c = crossings(p, 0.5);
    let ups: Vec<f64> = c.iter().filter(|(_, o)| *o > 0).map(|(x, _)| *x).collect();
    if ups.is_empty() {
        return Err(Error::Fit("no upward 1/2-crossing".into()));
    }
    let centre = c.iter().map(|(x, _)| x).sum::<f64>() / c.len() as f64;
    let x0 = ups.iter().copied().min_by(|a, b| (a - centre).abs().total_cmp(&(b - centre).abs())).unwrap();
    let nodes = p.grid.nodes();
    let dist = |a: f64| {
        nodes
            .iter()
            .zip(&p.values)
            .map(|(x, v)| (v - layer.u_at((x - a) / eps)).abs())
            .fold(0.0, f64::max)
    };
    let (mut lo, mut hi) = (x0 - 2.0 * eps, x0 + 2.0 * eps);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let (mut a, mut b) = (hi - g * (hi - lo), lo + g * (hi - lo));
    let (mut fa, mut fb) = (dist(a), dist(b));
    while hi - lo > 1e-9 * eps {
        if fa < fb {
            hi = b;
            b = a;
            fb = fa;
            a = hi - g * (hi - lo);
            fa = dist(a);
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = lo + g * (hi - lo);
            fb = dist(b);
        }
    }
    let xf = 0.5 * (lo + hi);
    Ok((xf, dist(xf)))
}

#[derive(Debug, Clone, Serialize)]
pub struct LayerComparison {
    pub times: Vec<f64>,
    pub x_fit: Vec<f64>,
    pub distance: Vec<f64>,
}

/// Best translated layer for every snapshot that has an upward 1/2-crossing.
pub fn compare_to_layer(result: &EvolutionResult, layer: &LayerSolution, eps: f64) -> Result<LayerComparison> {
    let mut out = LayerComparison { times: vec![], x_fit: vec![], distance: vec![] };
    for (t, p) in result.snapshot_times.iter().zip(&result.snapshots) {
        if let Ok((x, d)) = best_translate(p, layer, eps) {
            out.times.push(*t);
            out.x_fit.push(x);
            out.distance.push(d);
        }
    }
    if out.times.is_empty() {
        return Err(Error::Fit("no snapshot has a 1/2-crossing".into()));
    }
    Ok(out)
}

/// Whether `xs` is nonincreasing up to `slack`.
pub fn is_nonincreasing(xs: &[f64], slack: f64) -> bool {
    xs.windows(2).all(|w| w[1] <= w[0] + slack)
}

/// Value of a profile anywhere on the line.
pub fn value_at(p: &Profile, x: f64) -> f64 {
    interp_at(p, x)
}
