//! Two- and three-particle systems with alternating orientations.
//!
//! Particle `i` moves by
//! `ẋ_i = γ(Σ_{j≠i} ζ_iζ_j sgn(x_i − x_j)/(2s|x_i − x_j|^{2s}) − ζ_iσ(t, x_i) − ζ_i f)`
//! with `f = δ` (widened system), `−δ` (shrunk system) or `0`.
//! The state is integrated as `[x_1, υ_1, …, υ_{N−1}]` where `υ_i = θ_i^{2s+1}`
//! and `θ_i = x_{i+1} − x_i`; `υ` stays Lipschitz up to a collision.

use std::sync::Arc;

use serde::Serialize;

use crate::ode::{self, dopri_step, OdeOptions, OdeSystem};
use crate::potential::{Stress, ZeroStress};
use crate::{Error, Result};

/// Simultaneity window for merging two gap collisions into a triple one.
pub const TRIPLE_WINDOW: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DeltaMode {
    None,
    /// Start at `x⁰ − ζδ`, force `−ζδ`.
    Widen,
    /// Start at `x⁰ + ζδ`, force `+ζδ`.
    Shrink,
}

impl DeltaMode {
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "none" => Ok(Self::None),
            "widen" | "bar" => Ok(Self::Widen),
            "shrink" | "underline" => Ok(Self::Shrink),
            other => Err(Error::Config(format!("unknown delta mode `{other}`"))),
        }
    }

    fn sign(self) -> f64 {
        match self {
            Self::None => 0.0,
            Self::Widen => 1.0,
            Self::Shrink => -1.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ParticleConfig {
    pub positions: Vec<f64>,
    pub s: f64,
    pub gamma: f64,
    pub stress: Arc<dyn Stress>,
    pub delta: f64,
    pub mode: DeltaMode,
    /// When false the positions are used as given; the force term still applies.
    pub shift_initial: bool,
    /// Stop gap; defaults to `1e-4` times the smallest initial gap.
    pub stop_gap: Option<f64>,
}

impl ParticleConfig {
    pub fn new(positions: Vec<f64>, s: f64, gamma: f64) -> Self {
        Self {
            positions,
            s,
            gamma,
            stress: Arc::new(ZeroStress),
            delta: 0.0,
            mode: DeltaMode::None,
            shift_initial: true,
            stop_gap: None,
        }
    }

    pub fn with_stress(mut self, stress: Arc<dyn Stress>) -> Self {
        self.stress = stress;
        self
    }

    pub fn with_delta(mut self, delta: f64, mode: DeltaMode) -> Self {
        self.delta = delta;
        self.mode = mode;
        self
    }

    pub fn unshifted(mut self) -> Self {
        self.shift_initial = false;
        self
    }

    pub fn with_stop_gap(mut self, gap: f64) -> Self {
        self.stop_gap = Some(gap);
        self
    }

    pub fn n(&self) -> usize {
        self.positions.len()
    }

    pub fn orientation(i: usize) -> f64 {
        if i % 2 == 0 {
            1.0
        } else {
            -1.0
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |detail: String| Err(Error::Validation { assumption: "particle config", detail });
        if !(2..=3).contains(&self.n()) {
            return bad(format!("N = {} (expected 2 or 3)", self.n()));
        }
        if self.positions.windows(2).any(|w| !(w[1] > w[0])) || self.positions.iter().any(|x| !x.is_finite()) {
            return bad("positions must be finite and strictly increasing".into());
        }
        if !(self.s > 0.0 && self.s < 1.0) {
            return bad(format!("s = {}", self.s));
        }
        if !(self.gamma > 0.0) {
            return bad(format!("gamma = {}", self.gamma));
        }
        if !(self.delta >= 0.0) {
            return bad(format!("delta = {}", self.delta));
        }
        if let Some(g) = self.stop_gap {
            if !(g > 0.0) {
                return bad(format!("stop gap = {g}"));
            }
        }
        Ok(())
    }

    pub fn initial_positions(&self) -> Vec<f64> {
        let m = if self.shift_initial { self.mode.sign() } else { 0.0 };
        self.positions
            .iter()
            .enumerate()
            .map(|(i, x)| x - m * Self::orientation(i) * self.delta)
            .collect()
    }

    fn stop_threshold(&self, x0: &[f64]) -> f64 {
        self.stop_gap
            .unwrap_or_else(|| 1e-4 * x0.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min))
    }

    /// Velocities from the left position and the gaps. Interaction terms only
    /// depend on gaps, so mirror-symmetric configurations stay symmetric.
    pub fn velocities(&self, t: f64, x1: f64, gaps: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = gaps.len() + 1;
        let mut x = Vec::with_capacity(n);
        x.push(x1);
        for g in gaps {
            x.push(x.last().unwrap() + g);
        }
        let two_s = 2.0 * self.s;
        let f = self.mode.sign() * self.delta;
        let mut v = vec![0.0; n];
        for i in 0..n {
            let zi = Self::orientation(i);
            let mut acc = 0.0;
            for j in 0..n {
                if j == i {
                    continue;
                }
                let (lo, hi) = if i < j { (i, j) } else { (j, i) };
                let d: f64 = gaps[lo..hi].iter().sum();
                let term = zi * Self::orientation(j) / (two_s * d.powf(two_s));
                if i > j {
                    acc += term;
                } else {
                    acc -= term;
                }
            }
            if !self.stress.is_zero() {
                acc -= zi * self.stress.sigma(t, x[i]);
            }
            if f != 0.0 {
                acc -= zi * f;
            }
            v[i] = self.gamma * acc;
        }
        (x, v)
    }
}

struct System<'a> {
    cfg: &'a ParticleConfig,
}

impl System<'_> {
    fn gaps(&self, y: &[f64]) -> Option<Vec<f64>> {
        let inv = 1.0 / (2.0 * self.cfg.s + 1.0);
        y[1..]
            .iter()
            .map(|u| if *u > 0.0 && u.is_finite() { Some(u.powf(inv)) } else { None })
            .collect()
    }
}

impl OdeSystem for System<'_> {
    fn dim(&self) -> usize {
        self.cfg.n()
    }

    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]) -> bool {
        let Some(gaps) = self.gaps(y) else { return false };
        let (_, v) = self.cfg.velocities(t, y[0], &gaps);
        let two_s = 2.0 * self.cfg.s;
        dy[0] = v[0];
        for i in 0..gaps.len() {
            dy[i + 1] = (two_s + 1.0) * gaps[i].powf(two_s) * (v[i + 1] - v[i]);
        }
        true
    }
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub positions: Vec<Vec<f64>>,
    pub velocities: Vec<Vec<f64>>,
    pub gaps: Vec<Vec<f64>>,
    pub upsilons: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn theta_min(&self, k: usize) -> f64 {
        self.gaps[k].iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn upsilon_min(&self, k: usize) -> f64 {
        self.upsilons[k].iter().copied().fold(f64::INFINITY, f64::min)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CollisionKind {
    None,
    Simple,
    Triple,
}

#[derive(Debug, Clone, Serialize)]
pub struct CollisionReport {
    pub t_c: Option<f64>,
    pub kind: CollisionKind,
    /// 1-based indices of the colliding pairs.
    pub pairs: Vec<(usize, usize)>,
    pub x_c: Option<f64>,
    pub stop_gap: f64,
    /// Time at which the stop gap was reached.
    pub t_stop: Option<f64>,
}

/// Integrated system with dense access to the state.
#[derive(Debug, Clone)]
pub struct ParticleRun {
    pub cfg: ParticleConfig,
    pub trajectory: Trajectory,
    pub report: CollisionReport,
    /// Last time at which the state is available.
    pub t_end: f64,
    knots_t: Vec<f64>,
    knots_y: Vec<Vec<f64>>,
    opts: OdeOptions,
}

/// State of the particle system at one time.
#[derive(Debug, Clone)]
pub struct ParticleState {
    pub t: f64,
    pub positions: Vec<f64>,
    pub velocities: Vec<f64>,
    pub gaps: Vec<f64>,
}

impl ParticleRun {
    fn state_from(&self, t: f64, y: &[f64]) -> Result<ParticleState> {
        let sys = System { cfg: &self.cfg };
        let gaps = sys.gaps(y).ok_or(Error::OutsideTrajectory { t, t_end: self.t_end })?;
        let (positions, velocities) = self.cfg.velocities(t, y[0], &gaps);
        Ok(ParticleState { t, positions, velocities, gaps })
    }

    /// State at any `t` in `[0, t_end]`, by one step from the nearest knot.
    pub fn state_at(&self, t: f64) -> Result<ParticleState> {
        if !(t >= self.knots_t[0] && t <= self.t_end) {
            return Err(Error::OutsideTrajectory { t, t_end: self.t_end });
        }
        let k = self.knots_t.partition_point(|tk| *tk <= t).saturating_sub(1);
        let h = t - self.knots_t[k];
        if h == 0.0 {
            return self.state_from(t, &self.knots_y[k]);
        }
        let sys = System { cfg: &self.cfg };
        let (y, _) = dopri_step(&sys, self.knots_t[k], &self.knots_y[k], h, &self.opts)
            .ok_or(Error::OutsideTrajectory { t, t_end: self.t_end })?;
        self.state_from(t, &y)
    }

    /// `x_{i+1} − x_i` at `t`.
    pub fn gaps_at(&self, t: f64) -> Result<Vec<f64>> {
        Ok(self.state_at(t)?.gaps)
    }
}

/// Integrates up to `t_max` or until the smallest gap reaches the stop gap.
pub fn integrate_particles(cfg: &ParticleConfig, t_max: f64) -> Result<(Trajectory, CollisionReport)> {
    let run = run_particles(cfg, t_max, &[])?;
    Ok((run.trajectory, run.report))
}

/// Like [`integrate_particles`], also landing on `outputs` and keeping dense access.
pub fn run_particles(cfg: &ParticleConfig, t_max: f64, outputs: &[f64]) -> Result<ParticleRun> {
    cfg.validate()?;
    let opts = OdeOptions::default();
    let x0 = cfg.initial_positions();
    if x0.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Validation {
            assumption: "particle config",
            detail: "perturbed initial positions are not ordered".into(),
        });
    }
    let stop_gap = cfg.stop_threshold(&x0);
    let p = 2.0 * cfg.s + 1.0;
    let ups_stop = stop_gap.powf(p);
    let mut y0 = vec![x0[0]];
    y0.extend(x0.windows(2).map(|w| (w[1] - w[0]).powf(p)));
    let sys = System { cfg };
    let event = |_: f64, y: &[f64]| y[1..].iter().copied().fold(f64::INFINITY, f64::min) - ups_stop;
    let h0 = 1e-3 * y0[1..].iter().copied().fold(f64::INFINITY, f64::min) / cfg.gamma;
    let mut o = opts;
    o.h0 = h0.max(1e-12);
    let odr = ode::solve(&sys, 0.0, &y0, t_max, outputs, Some(&event), &o)?;

    let mut traj = Trajectory::default();
    for (t, y) in odr.ts.iter().zip(&odr.ys) {
        let gaps = sys.gaps(y).ok_or(Error::StepUnderflow { t: *t, h: 0.0, state: y.clone() })?;
        let (x, v) = cfg.velocities(*t, y[0], &gaps);
        traj.times.push(*t);
        traj.positions.push(x);
        traj.velocities.push(v);
        traj.upsilons.push(y[1..].to_vec());
        traj.gaps.push(gaps);
    }
    let t_end = *odr.ts.last().unwrap();
    let report = match &odr.event {
        None => CollisionReport { t_c: None, kind: CollisionKind::None, pairs: vec![], x_c: None, stop_gap, t_stop: None },
        Some((te, ye)) => {
            let mut dy = vec![0.0; ye.len()];
            sys.rhs(*te, ye, &mut dy);
            let ups = &ye[1..];
            let rates = &dy[1..];
            let k = (0..ups.len()).min_by(|a, b| ups[*a].total_cmp(&ups[*b])).unwrap();
            let rate = -rates[k];
            // The partner gap counts as colliding when it would reach the stop
            // value within the window at the rate of the first one.
            let triple = ups.len() == 2 && rate > 0.0 && (ups[1 - k] - ups_stop) <= TRIPLE_WINDOW * rate;
            let t_c = if cfg.stress.is_zero() && rate > 0.0 { te + ups[k] / rate } else { *te };
            let last = traj.positions.last().unwrap();
            let (kind, pairs, x_c) = if triple {
                (CollisionKind::Triple, vec![(1, 2), (2, 3)], last.iter().sum::<f64>() / 3.0)
            } else {
                (CollisionKind::Simple, vec![(k + 1, k + 2)], 0.5 * (last[k] + last[k + 1]))
            };
            CollisionReport { t_c: Some(t_c), kind, pairs, x_c: Some(x_c), stop_gap, t_stop: Some(*te) }
        }
    };
    Ok(ParticleRun { cfg: cfg.clone(), trajectory: traj, report, t_end, knots_t: odr.ts, knots_y: odr.ys, opts })
}

#[derive(Debug, Clone, Serialize)]
pub struct DeltaLimitEntry {
    pub delta: f64,
    pub t_c: f64,
    /// `max_{i, t ≤ 0.9 T_c} |x̄_i(t) − x_i(t)|`.
    pub max_position_dev: f64,
}

/// Collision times of the widened systems and their distance to the base system.
pub fn collision_time_convergence(cfg: &ParticleConfig, deltas: &[f64], t_max: f64) -> Result<Vec<DeltaLimitEntry>> {
    let base_cfg = cfg.clone().with_delta(0.0, DeltaMode::None);
    let base = run_particles(&base_cfg, t_max, &[])?;
    let tc = base.report.t_c.ok_or(Error::Validation {
        assumption: "finite collision time",
        detail: format!("no collision before t = {t_max}"),
    })?;
    let samples: Vec<f64> = (0..=200).map(|k| 0.9 * tc * k as f64 / 200.0).collect();
    let base_states = samples.iter().map(|t| base.state_at(*t)).collect::<Result<Vec<_>>>()?;
    let mut out = Vec::with_capacity(deltas.len());
    for &delta in deltas {
        let (mode, d) = if delta == 0.0 { (DeltaMode::None, 0.0) } else { (DeltaMode::Widen, delta) };
        let run = run_particles(&cfg.clone().with_delta(d, mode), t_max, &[])?;
        let t_c = run.report.t_c.ok_or(Error::Validation {
            assumption: "finite collision time",
            detail: format!("no collision for delta = {delta}"),
        })?;
        let mut dev = 0.0f64;
        for (t, b) in samples.iter().zip(&base_states) {
            if *t > run.t_end {
                break;
            }
            let st = run.state_at(*t)?;
            for (p, q) in st.positions.iter().zip(&b.positions) {
                dev = dev.max((p - q).abs());
            }
        }
        out.push(DeltaLimitEntry { delta, t_c, max_position_dev: dev });
    }
    Ok(out)
}

/// Collision type of an unperturbed, unstressed three-particle system,
/// decided from the initial spacing.
pub fn classify_collision(cfg: &ParticleConfig) -> Result<(CollisionKind, Vec<(usize, usize)>)> {
    cfg.validate()?;
    if cfg.n() != 3 || !cfg.stress.is_zero() || cfg.delta != 0.0 {
        return Err(Error::Validation {
            assumption: "classification",
            detail: "needs N = 3, zero stress and delta = 0".into(),
        });
    }
    let x = &cfg.positions;
    let (a, b) = (x[1] - x[0], x[2] - x[1]);
    if (a - b).abs() <= 1e-10 * a.max(b) {
        Ok((CollisionKind::Triple, vec![(1, 2), (2, 3)]))
    } else if a < b {
        Ok((CollisionKind::Simple, vec![(1, 2)]))
    } else {
        Ok((CollisionKind::Simple, vec![(2, 3)]))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Two,
    Three,
}

/// Length of the interval on which the hat system pushes the first particle
/// past the second perturbed particle.
pub fn transition_time(s: f64, gamma: f64, k: f64, theta: f64, sigma_bound: f64, delta_hat: f64, variant: Variant) -> Result<f64> {
    let two_s = 2.0 * s;
    let kk = (k + 2.0).powf(two_s);
    let load = kk * theta.powf(two_s) * (sigma_bound + delta_hat);
    let (num, den) = match variant {
        Variant::Two => (4.0 * s * kk * theta.powf(two_s + 1.0), 1.0 - two_s * load),
        Variant::Three => (
            2f64.powf(two_s + 2.0) * s * kk * theta.powf(two_s + 1.0),
            2f64.powf(two_s) - 1.0 - 2f64.powf(two_s + 1.0) * s * load,
        ),
    };
    if !(den > 0.0) {
        return Err(Error::SmallGapRegime(den));
    }
    Ok(num / (gamma * den))
}

/// Lower bound on the time the hat gap needs to shrink from `(K+2)θ` to `θ`.
fn hat_shrink_time(s: f64, k: f64, theta: f64, sigma_bound: f64) -> f64 {
    let two_s = 2.0 * s;
    s * theta.powf(two_s + 1.0) * ((k + 2.0).powf(two_s + 1.0) - 1.0)
        / ((two_s + 1.0) * (1.0 + two_s * sigma_bound * (k + 2.0).powf(two_s) * theta.powf(two_s)))
}

const K_CAP: u32 = 1_000_000;
const M_CAP: u32 = 10_000_000;

/// Smallest integer `K > 1` with the three-particle lower bound; it does not
/// depend on `θ`, `σ` or `δ̂`.
pub fn choose_k(s: f64) -> Result<u32> {
    let two_s = 2.0 * s;
    let rhs = (two_s + 1.0) * 2f64.powf(two_s + 2.0) * (1.0 + 2f64.powf(two_s)) / (2f64.powf(two_s) - 1.0);
    let f = |k: f64| ((k + 2.0).powf(two_s + 1.0) - 1.0) / (k + 2.0).powf(two_s);
    (2..K_CAP).find(|k| f(*k as f64) >= rhs).ok_or(Error::Infeasible { what: "K", cap: K_CAP as usize })
}

/// `K` (smallest integer above 1 with the three-particle lower bound) and
/// `M` (smallest integer above `2K + 3` keeping the hat gaps ordered).
pub fn choose_constants(s: f64, sigma_bound: f64, delta_hat: f64, theta: f64) -> Result<(u32, u32)> {
    let two_s = 2.0 * s;
    let k = choose_k(s)?;
    let kf = k as f64;
    let load = two_s * (sigma_bound + delta_hat) * (kf + 2.0).powf(two_s) * theta.powf(two_s);
    let expr = |m: f64| {
        let a = (kf + 2.0) / (m - kf - 1.0);
        -1.0 + a.powf(two_s) + a.powf(two_s + 1.0) + load * (a + 1.0)
    };
    let m = (2 * k + 4..M_CAP).find(|m| expr(*m as f64) < 0.0).ok_or(Error::Infeasible { what: "M", cap: M_CAP as usize })?;
    Ok((k, m))
}

/// Smallest integer `K > 1` for which the two-particle hat gap stays above
/// `θ` during the transition time.
pub fn choose_k_two(s: f64, sigma_bound: f64, delta_hat: f64, theta: f64) -> Result<u32> {
    (2..K_CAP)
        .find(|k| {
            let kf = *k as f64;
            match transition_time(s, 1.0, kf, theta, sigma_bound, delta_hat, Variant::Two) {
                Ok(t) => hat_shrink_time(s, kf, theta, sigma_bound) > t,
                Err(_) => false,
            }
        })
        .ok_or(Error::Infeasible { what: "K", cap: K_CAP as usize })
}

/// Which end of the collision the hat system is built for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum HatSide {
    /// Left particle moved by `θ`, right one by `Kθ`.
    Left,
    /// Left particle moved by `Kθ`, right one by `θ`.
    Right,
}

/// Initial positions of the hat system from the perturbed positions at the
/// time their first gap equals `theta`.
pub fn hat_initial(bar: &[f64], theta: f64, k: f64, side: HatSide) -> Vec<f64> {
    let (a, b) = match side {
        HatSide::Left => (theta, k * theta),
        HatSide::Right => (k * theta, theta),
    };
    let mut x = vec![bar[0] - a, bar[1] + b];
    if bar.len() == 3 {
        x.push(bar[2] - theta);
    }
    x
}

#[derive(Debug, Clone, Serialize)]
pub struct HatCheck {
    pub t_eps: f64,
    pub theta1_le_theta2: bool,
    pub theta1_decreasing: bool,
    pub passes_second: bool,
    pub gaps_above_theta: bool,
    pub min_gap: f64,
}

impl HatCheck {
    pub fn all(&self) -> bool {
        self.theta1_le_theta2 && self.theta1_decreasing && self.passes_second && self.gaps_above_theta
    }
}

/// Checks the hat-system geometry on `[0, t_eps]` on `samples + 1` points.
pub fn check_hat_system(run: &ParticleRun, bar_second: f64, theta: f64, t_eps: f64, samples: usize) -> Result<HatCheck> {
    if t_eps > run.t_end {
        return Err(Error::OutsideTrajectory { t: t_eps, t_end: run.t_end });
    }
    let mut check = HatCheck {
        t_eps,
        theta1_le_theta2: true,
        theta1_decreasing: true,
        passes_second: false,
        gaps_above_theta: true,
        min_gap: f64::INFINITY,
    };
    let mut prev = f64::INFINITY;
    for k in 0..=samples {
        let t = t_eps * k as f64 / samples as f64;
        let st = run.state_at(t)?;
        let g = &st.gaps;
        if g.len() == 2 && g[0] > g[1] {
            check.theta1_le_theta2 = false;
        }
        if g[0] > prev {
            check.theta1_decreasing = false;
        }
        prev = g[0];
        let mg = g.iter().copied().fold(f64::INFINITY, f64::min);
        check.min_gap = check.min_gap.min(mg);
        if mg < theta {
            check.gaps_above_theta = false;
        }
        if k == samples {
            check.passes_second = st.positions[0] >= bar_second;
        }
    }
    Ok(check)
}

/// `max |υ_min(t+h) − υ_min(t)|/h` over dyadic pairs at levels `1..=levels`
/// on `[0, t_end]`.
pub fn upsilon_lipschitz(run: &ParticleRun, levels: u32) -> Result<f64> {
    let p = 2.0 * run.cfg.s + 1.0;
    let n = 1usize << levels;
    let ups: Vec<f64> = (0..=n)
        .map(|k| {
            let t = run.t_end * k as f64 / n as f64;
            run.state_at(t).map(|st| st.gaps.iter().copied().fold(f64::INFINITY, f64::min).powf(p))
        })
        .collect::<Result<_>>()?;
    let mut best = 0.0f64;
    for level in 1..=levels {
        let stride = 1usize << (levels - level);
        let h = run.t_end * stride as f64 / n as f64;
        for k in (0..n).step_by(stride) {
            best = best.max((ups[k + stride] - ups[k]).abs() / h);
        }
    }
    Ok(best)
}
