//! Explicit barriers built from shifted layers, correctors and a shifted
//! stress, their residual `I_ε`, the calibration of `δ`, the scalar flow `h`
//! and the moving-layer supersolution.
//!
//! A barrier with `N` layers reads
//!
//! ```text
//! v(t,x) = ε^{2s}(σ(t,x) ± δ)/β + Σ u(ζ_i(x − x_i(t))/ε) − ⌊N/2⌋
//!          − Σ ζ_i ε^{2s} c_i(t) ψ(ζ_i(x − x_i(t))/ε)
//! ```
//!
//! with `ζ_i = (−1)^{i−1}` and `c_i = ẋ_i`. Its fractional Laplacian is
//! obtained by linearity from `I_s u` and `I_s ψ`, computed once on the layer
//! grid, so the residual is exact up to interpolation.

use std::sync::Arc;

use serde::Serialize;

use crate::layer::{Corrector, LayerSolution};
use crate::nonlocal::{interp_at, FracLap, Grid, Profile, TailModel};
use crate::ode::{self, OdeOptions, OdeSystem};
use crate::particles::{run_particles, DeltaMode, ParticleConfig, ParticleRun};
use crate::potential::{Potential, Stress};
use crate::{Error, Result};

/// Ordering tolerance of [`check_ordering`].
pub const ORDER_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BarrierKind {
    /// One frozen layer; the degenerate case.
    Single,
    TwoUpper,
    TwoHat,
    ThreeUpper,
    ThreeLower,
    ThreeHat,
}

impl BarrierKind {
    pub fn names() -> &'static [&'static str] {
        &["single", "two_upper", "two_hat", "three_upper", "three_lower", "three_hat"]
    }

    pub fn from_name(name: &str) -> Result<Self> {
        Ok(match name {
            "single" => Self::Single,
            "two_upper" => Self::TwoUpper,
            "two_hat" => Self::TwoHat,
            "three_upper" => Self::ThreeUpper,
            "three_lower" => Self::ThreeLower,
            "three_hat" => Self::ThreeHat,
            other => return Err(Error::Config(format!("unknown barrier variant `{other}`"))),
        })
    }

    pub fn name(self) -> &'static str {
        Self::names()[self as usize]
    }

    pub fn particles(self) -> usize {
        match self {
            Self::Single => 1,
            Self::TwoUpper | Self::TwoHat => 2,
            _ => 3,
        }
    }

    /// Perturbation mode of the matching particle system.
    pub fn mode(self) -> DeltaMode {
        match self {
            Self::Single => DeltaMode::None,
            Self::ThreeLower => DeltaMode::Shrink,
            _ => DeltaMode::Widen,
        }
    }

    pub fn is_hat(self) -> bool {
        matches!(self, Self::TwoHat | Self::ThreeHat)
    }

    /// `+1` for supersolutions, `−1` for the subsolution.
    pub fn sign(self) -> f64 {
        if self == Self::ThreeLower {
            -1.0
        } else {
            1.0
        }
    }
}

/// Positions and velocities of the particles as functions of time.
pub trait Kinematics: Send + Sync + std::fmt::Debug {
    fn n(&self) -> usize;
    /// `(x_i(t), ẋ_i(t))`.
    fn state(&self, t: f64) -> Result<(Vec<f64>, Vec<f64>)>;
    /// Interval on which [`Kinematics::state`] is defined.
    fn window(&self) -> (f64, f64);
}

impl Kinematics for ParticleRun {
    fn n(&self) -> usize {
        self.cfg.n()
    }
    fn state(&self, t: f64) -> Result<(Vec<f64>, Vec<f64>)> {
        let st = self.state_at(t)?;
        Ok((st.positions, st.velocities))
    }
    fn window(&self) -> (f64, f64) {
        (0.0, self.t_end)
    }
}

/// Particles in uniform motion `x_i + c_i(t − t0)` on `[t0, t1]`.
#[derive(Debug, Clone)]
pub struct Frozen {
    pub t0: f64,
    pub t1: f64,
    pub positions: Vec<f64>,
    pub velocities: Vec<f64>,
}

impl Frozen {
    pub fn at_rest(positions: Vec<f64>, t1: f64) -> Self {
        let n = positions.len();
        Self { t0: 0.0, t1, positions, velocities: vec![0.0; n] }
    }
}

impl Kinematics for Frozen {
    fn n(&self) -> usize {
        self.positions.len()
    }
    fn state(&self, t: f64) -> Result<(Vec<f64>, Vec<f64>)> {
        let x = self.positions.iter().zip(&self.velocities).map(|(x, c)| x + c * (t - self.t0)).collect();
        Ok((x, self.velocities.clone()))
    }
    fn window(&self) -> (f64, f64) {
        (self.t0, self.t1)
    }
}

/// Layer, corrector and their fractional Laplacians on the layer grid.
#[derive(Debug, Clone)]
pub struct LayerField {
    pub s: f64,
    pub beta: f64,
    pub u: Profile,
    pub iu: Profile,
    pub psi: Option<Profile>,
    pub ipsi: Option<Profile>,
}

impl LayerField {
    pub fn new(layer: &LayerSolution, corrector: Option<&Corrector>) -> Result<Self> {
        let s = layer.s;
        let grid = layer.u.grid;
        let op = FracLap::new(&grid, s)?;
        let iu = op.apply(&layer.u)?;
        let iu = Profile::with_matched_tail(grid, iu.values, 0.0, 0.0, 2.0 * s)?;
        let (psi, ipsi) = match corrector {
            Some(c) => {
                if c.psi.grid != grid {
                    return Err(Error::GridMismatch("corrector and layer grids differ".into()));
                }
                let ip = op.apply(&c.psi)?;
                let ip = Profile::with_matched_tail(grid, ip.values, 0.0, 0.0, 1.0 + 2.0 * s)?;
                (Some(c.psi.clone()), Some(ip))
            }
            None => (None, None),
        };
        Ok(Self { s, beta: layer.beta, u: layer.u.clone(), iu, psi, ipsi })
    }

    pub fn u(&self, y: f64) -> f64 {
        interp_at(&self.u, y)
    }
    pub fn iu(&self, y: f64) -> f64 {
        interp_at(&self.iu, y)
    }
    pub fn psi(&self, y: f64) -> f64 {
        self.psi.as_ref().map_or(0.0, |p| interp_at(p, y))
    }
    pub fn ipsi(&self, y: f64) -> f64 {
        self.ipsi.as_ref().map_or(0.0, |p| interp_at(p, y))
    }
}

fn orientation(i: usize) -> f64 {
    if i % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// A barrier: variant, `ε`, `δ` (or `δ̂`), particle motion, layer data and stress.
#[derive(Debug, Clone)]
pub struct BarrierSpec {
    pub kind: BarrierKind,
    pub epsilon: f64,
    pub delta: f64,
    pub kinematics: Arc<dyn Kinematics>,
    pub field: Arc<LayerField>,
    pub stress: Arc<dyn Stress>,
}

impl BarrierSpec {
    /// Barrier driven by a particle run; `δ` and the stress are read from it.
    pub fn from_run(kind: BarrierKind, epsilon: f64, run: ParticleRun, field: Arc<LayerField>) -> Result<Self> {
        let bad = |detail: String| Err(Error::Validation { assumption: "barrier variant matches trajectory", detail });
        if run.cfg.n() != kind.particles() {
            return bad(format!("{} needs {} particles, run has {}", kind.name(), kind.particles(), run.cfg.n()));
        }
        if run.cfg.mode != kind.mode() && !(run.cfg.delta == 0.0 && run.cfg.mode == DeltaMode::None) {
            return bad(format!("{} needs a {:?} system, run is {:?}", kind.name(), kind.mode(), run.cfg.mode));
        }
        if kind.is_hat() == run.cfg.shift_initial {
            return bad(format!("{}: hat systems start unshifted, bar systems shifted", kind.name()));
        }
        check_eps(epsilon)?;
        Ok(Self { kind, epsilon, delta: run.cfg.delta, stress: run.cfg.stress.clone(), kinematics: Arc::new(run), field })
    }

    /// Barrier with prescribed motion.
    pub fn with_kinematics(
        kind: BarrierKind,
        epsilon: f64,
        delta: f64,
        kinematics: Arc<dyn Kinematics>,
        field: Arc<LayerField>,
        stress: Arc<dyn Stress>,
    ) -> Result<Self> {
        if kinematics.n() != kind.particles() {
            return Err(Error::Validation {
                assumption: "barrier variant matches trajectory",
                detail: format!("{} needs {} particles, got {}", kind.name(), kind.particles(), kinematics.n()),
            });
        }
        check_eps(epsilon)?;
        Ok(Self { kind, epsilon, delta, kinematics, field, stress })
    }

    fn shift(&self) -> f64 {
        self.epsilon.powf(2.0 * self.field.s) / self.field.beta
    }

    fn offset(&self) -> f64 {
        (self.kind.particles() / 2) as f64
    }

    fn state(&self, t: f64) -> Result<(Vec<f64>, Vec<f64>)> {
        let (a, b) = self.kinematics.window();
        if !(t >= a && t <= b) {
            return Err(Error::OutsideTrajectory { t, t_end: b });
        }
        self.kinematics.state(t)
    }

    fn value(&self, t: f64, x: f64, pos: &[f64], vel: &[f64]) -> f64 {
        let e = self.epsilon;
        let e2s = e.powf(2.0 * self.field.s);
        let mut v = self.shift() * (self.stress.sigma(t, x) + self.kind.sign() * self.delta) - self.offset();
        for (i, (xi, ci)) in pos.iter().zip(vel).enumerate() {
            let z = orientation(i);
            let y = z * (x - xi) / e;
            v += self.field.u(y);
            if self.field.psi.is_some() {
                v -= z * e2s * ci * self.field.psi(y);
            }
        }
        v
    }

    /// `I_s v(t, x)`.
    fn frac_lap(&self, t: f64, x: f64, pos: &[f64], vel: &[f64]) -> f64 {
        let e = self.epsilon;
        let s = self.field.s;
        let e2s = e.powf(2.0 * s);
        let mut l = if self.stress.is_zero() { 0.0 } else { self.shift() * self.stress.frac_lap(s, t, x) };
        for (i, (xi, ci)) in pos.iter().zip(vel).enumerate() {
            let z = orientation(i);
            let y = z * (x - xi) / e;
            l += self.field.iu(y) / e2s;
            if self.field.ipsi.is_some() {
                l -= z * ci * self.field.ipsi(y);
            }
        }
        l
    }

    /// Barrier value at `(t, x)`.
    pub fn value_at(&self, t: f64, x: f64) -> Result<f64> {
        let (p, c) = self.state(t)?;
        Ok(self.value(t, x, &p, &c))
    }

    /// Limits at `∓∞`.
    pub fn limits(&self, t: f64, half_width: f64) -> (f64, f64) {
        let sh = self.shift();
        let d = self.kind.sign() * self.delta;
        let right = if self.kind.particles() % 2 == 1 { 1.0 } else { 0.0 };
        (sh * (self.stress.sigma(t, -half_width) + d), right + sh * (self.stress.sigma(t, half_width) + d))
    }
}

fn check_eps(eps: f64) -> Result<()> {
    if eps > 0.0 && eps.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("ε = {eps} must be positive")))
    }
}

/// The barrier on `grid` at time `t`, with a matched tail.
pub fn assemble_barrier(spec: &BarrierSpec, t: f64, grid: &Grid) -> Result<Profile> {
    let (p, c) = spec.state(t)?;
    let values: Vec<f64> = grid.nodes().iter().map(|x| spec.value(t, *x, &p, &c)).collect();
    let (ll, lr) = spec.limits(t, grid.half_width());
    let tail = TailModel::matched_two_term(grid, &values, ll, lr, 2.0 * spec.field.s);
    Profile::new(*grid, values, Some(tail))
}

/// Sample sets for [`residual_field`].
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ResidualSampling {
    /// Number of time samples, clustered towards the end of the window.
    pub times: usize,
    /// Distance added on both sides of the particle hull.
    pub margin: f64,
    /// Space samples per `ε`.
    pub per_eps: f64,
    /// Keep the full `(t, x)` field in the report.
    pub keep_field: bool,
}

impl Default for ResidualSampling {
    fn default() -> Self {
        Self { times: 48, margin: 2.0, per_eps: 16.0, keep_field: false }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ResidualReport {
    pub variant: BarrierKind,
    pub epsilon: f64,
    pub delta: f64,
    pub theta: f64,
    pub dt_fd: f64,
    pub t_window: (f64, f64),
    pub x_window: (f64, f64),
    pub times: Vec<f64>,
    pub x: Vec<f64>,
    /// `sign · I_ε` row by row in time; empty unless requested.
    pub field: Vec<Vec<f64>>,
    /// Minimum of `sign · I_ε` per time sample.
    pub min_per_time: Vec<f64>,
    /// Minimum of `sign · I_ε` (`I_ε` for supersolutions, `−I_ε` for the subsolution).
    pub min: f64,
    pub argmin: (f64, f64),
    /// Smallest gap met on the window.
    pub min_gap: f64,
}

impl ResidualReport {
    pub fn holds(&self) -> bool {
        self.min >= 0.0
    }
}

/// `dt_fd = 10⁻³ ε^{2s+1}`.
pub fn fd_step(eps: f64, s: f64) -> f64 {
    1e-3 * eps.powf(2.0 * s + 1.0)
}

/// `sign · I_ε` with `I_ε = ε∂_t v + ε^{−2s}W'(v) − I_s v − σ` along `x` at time `t`.
fn residual_row(spec: &BarrierSpec, potential: &dyn Potential, t: f64, xs: &[f64], dt: f64) -> Result<Vec<f64>> {
    let (p, c) = spec.state(t)?;
    let (pm, cm) = spec.state(t - dt)?;
    let (pp, cp) = spec.state(t + dt)?;
    let e = spec.epsilon;
    let e2s = e.powf(2.0 * spec.field.s);
    let sign = spec.kind.sign();
    Ok(xs
        .iter()
        .map(|x| {
            let v = spec.value(t, *x, &p, &c);
            let vt = (spec.value(t + dt, *x, &pp, &cp) - spec.value(t - dt, *x, &pm, &cm)) / (2.0 * dt);
            let r = e * vt + potential.dw(v) / e2s - spec.frac_lap(t, *x, &p, &c) - spec.stress.sigma(t, *x);
            sign * r
        })
        .collect())
}

/// The four terms `(ε∂_t v, ε^{−2s}W'(v), I_s v, σ)` of `I_ε` at one point.
pub fn residual_terms(spec: &BarrierSpec, potential: &dyn Potential, t: f64, x: f64) -> Result<[f64; 4]> {
    let dt = fd_step(spec.epsilon, spec.field.s);
    let (p, c) = spec.state(t)?;
    let (pm, cm) = spec.state(t - dt)?;
    let (pp, cp) = spec.state(t + dt)?;
    let e = spec.epsilon;
    let v = spec.value(t, x, &p, &c);
    let vt = (spec.value(t + dt, x, &pp, &cp) - spec.value(t - dt, x, &pm, &cm)) / (2.0 * dt);
    Ok([e * vt, potential.dw(v) / e.powf(2.0 * spec.field.s), spec.frac_lap(t, x, &p, &c), spec.stress.sigma(t, x)])
}

/// Residual over the time window `[t0, t1]` (clipped so that the centred
/// difference stays inside the trajectory) and the particle hull plus margin.
/// Every sampled time must have all gaps at least `theta`.
pub fn residual_field(
    spec: &BarrierSpec,
    potential: &dyn Potential,
    window: (f64, f64),
    theta: f64,
    sampling: &ResidualSampling,
) -> Result<ResidualReport> {
    let dt = fd_step(spec.epsilon, spec.field.s);
    let (ka, kb) = spec.kinematics.window();
    let t0 = window.0.max(ka + dt);
    let t1 = window.1.min(kb - 2.0 * dt);
    if !(t1 >= t0) {
        return Err(Error::Domain(format!("empty residual window [{t0}, {t1}]")));
    }
    let nt = sampling.times.max(1);
    let times: Vec<f64> = (0..nt)
        .map(|k| {
            if nt == 1 {
                return t0;
            }
            let r = 1.0 - k as f64 / (nt - 1) as f64;
            t0 + (t1 - t0) * (1.0 - r * r)
        })
        .collect();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let mut min_gap = f64::INFINITY;
    for t in [t0, t1] {
        let (p, _) = spec.state(t)?;
        lo = lo.min(p[0]);
        hi = hi.max(*p.last().unwrap());
    }
    for t in &times {
        let (p, _) = spec.state(*t)?;
        let g = p.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
        if g < theta * (1.0 - 1e-9) {
            return Err(Error::GapViolation { t: *t, gap: g, threshold: theta });
        }
        min_gap = min_gap.min(g);
    }
    let (xa, xb) = (lo - sampling.margin, hi + sampling.margin);
    let nx = ((xb - xa) * sampling.per_eps / spec.epsilon).ceil() as usize + 1;
    let xs: Vec<f64> = (0..nx).map(|j| xa + (xb - xa) * j as f64 / (nx - 1) as f64).collect();
    let rows: Vec<Vec<f64>> = times.iter().map(|t| residual_row(spec, potential, *t, &xs, dt)).collect::<Result<_>>()?;
    let mut min = f64::INFINITY;
    let mut argmin = (f64::NAN, f64::NAN);
    let mut min_per_time = Vec::with_capacity(nt);
    for (t, row) in times.iter().zip(&rows) {
        let mut m = f64::INFINITY;
        for (x, r) in xs.iter().zip(row) {
            if *r < m {
                m = *r;
            }
            if *r < min {
                min = *r;
                argmin = (*t, *x);
            }
        }
        min_per_time.push(m);
    }
    Ok(ResidualReport {
        variant: spec.kind,
        epsilon: spec.epsilon,
        delta: spec.delta,
        theta,
        dt_fd: dt,
        t_window: (t0, t1),
        x_window: (xa, xb),
        times,
        x: xs,
        field: if sampling.keep_field { rows } else { vec![] },
        min_per_time,
        min,
        argmin,
        min_gap,
    })
}

/// Everything needed to rebuild a barrier for a trial `δ`.
#[derive(Debug, Clone)]
pub struct BarrierTemplate {
    pub kind: BarrierKind,
    /// Unperturbed positions (bar and lower) or the hat initial positions.
    pub positions: Vec<f64>,
    pub gamma: f64,
    pub stress: Arc<dyn Stress>,
    pub epsilon: f64,
    /// Gap threshold `θ_ε`; the particle runs stop there.
    pub theta: f64,
    /// Integration horizon (the transition time for hats).
    pub t_max: f64,
    pub sampling: ResidualSampling,
}

impl BarrierTemplate {
    pub fn run(&self, s: f64, delta: f64) -> Result<ParticleRun> {
        let mut cfg = ParticleConfig::new(self.positions.clone(), s, self.gamma)
            .with_stress(self.stress.clone())
            .with_delta(delta, self.kind.mode())
            .with_stop_gap(self.theta);
        if self.kind.is_hat() {
            cfg = cfg.unshifted();
        }
        run_particles(&cfg, self.t_max, &[])
    }

    pub fn spec(&self, delta: f64, field: Arc<LayerField>) -> Result<BarrierSpec> {
        if self.kind == BarrierKind::Single {
            let k = Frozen::at_rest(self.positions.clone(), self.t_max);
            return BarrierSpec::with_kinematics(self.kind, self.epsilon, delta, Arc::new(k), field, self.stress.clone());
        }
        let run = self.run(field.s, delta)?;
        BarrierSpec::from_run(self.kind, self.epsilon, run, field)
    }

    pub fn residual(&self, delta: f64, field: Arc<LayerField>, potential: &dyn Potential) -> Result<ResidualReport> {
        let spec = self.spec(delta, field)?;
        residual_field(&spec, potential, (0.0, f64::INFINITY), self.theta, &self.sampling)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Calibration {
    pub delta: f64,
    /// Minimum residual at `δ = 0`.
    pub min_at_zero: f64,
    /// Minimum residual at the returned `δ`.
    pub min_at_delta: f64,
    pub amplifications: usize,
    pub report: ResidualReport,
}

/// Smallest tried `δ` with nonnegative residual: starts from
/// `1.05 · max(0, −min I_ε(δ = 0))` (the residual grows by about `δ` when
/// `δ` is added) and enlarges by the remaining deficit at most three times.
pub fn calibrate_delta(template: &BarrierTemplate, field: Arc<LayerField>, potential: &dyn Potential) -> Result<Calibration> {
    let base = template.residual(0.0, field.clone(), potential)?;
    let min_at_zero = base.min;
    if min_at_zero >= 0.0 {
        return Ok(Calibration { delta: 0.0, min_at_zero, min_at_delta: min_at_zero, amplifications: 0, report: base });
    }
    let mut delta = 1.05 * (-min_at_zero);
    for k in 0..=3 {
        if delta > 1.0 {
            return Err(Error::Calibration(format!("δ = {delta} leaves the range [0, 1]")));
        }
        let rep = template.residual(delta, field.clone(), potential)?;
        if rep.min >= 0.0 {
            return Ok(Calibration { delta, min_at_zero, min_at_delta: rep.min, amplifications: k, report: rep });
        }
        delta += 1.05 * (-rep.min).max(0.05 * delta);
    }
    Err(Error::Calibration(format!("residual still negative after 3 amplifications (δ = {delta})")))
}

/// Smallest `δ̂ = δ + step·2^k` (`k = 0, 1, …, 20`) for which the hat barrier at
/// `t = 0` lies above `upper_end` on `grid`.
pub fn calibrate_hat_delta(
    template: &BarrierTemplate,
    delta: f64,
    field: Arc<LayerField>,
    upper_end: &Profile,
    step: f64,
) -> Result<(f64, BarrierSpec, OrderingReport)> {
    for k in 0..=20 {
        let dh = delta + step * 2f64.powi(k);
        if dh > 1.0 {
            break;
        }
        let spec = template.spec(dh, field.clone())?;
        let hat0 = assemble_barrier(&spec, 0.0, &upper_end.grid)?;
        let ord = check_ordering(upper_end, &hat0)?;
        if ord.holds {
            return Ok((dh, spec, ord));
        }
    }
    Err(Error::Calibration("no δ̂ ≤ 1 orders the hat barrier".into()))
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct OrderingReport {
    pub holds: bool,
    /// `max (a − b)`; positive values are violations.
    pub worst: f64,
    pub at: f64,
}

/// Whether `a ≤ b` at every node up to [`ORDER_TOL`].
pub fn check_ordering(a: &Profile, b: &Profile) -> Result<OrderingReport> {
    if a.grid != b.grid {
        return Err(Error::GridMismatch(format!("{:?} vs {:?}", a.grid, b.grid)));
    }
    let mut worst = f64::NEG_INFINITY;
    let mut at = f64::NAN;
    for (j, (x, y)) in a.values.iter().zip(&b.values).enumerate() {
        let d = x - y;
        if d > worst {
            worst = d;
            at = a.grid.x(j as isize);
        }
    }
    Ok(OrderingReport { holds: worst <= ORDER_TOL, worst, at })
}

struct ScalarFlow<'a>(&'a dyn Potential);

impl OdeSystem for ScalarFlow<'_> {
    fn dim(&self) -> usize {
        1
    }
    fn rhs(&self, _: f64, y: &[f64], dy: &mut [f64]) -> bool {
        dy[0] = -self.0.dw(y[0]);
        true
    }
}

/// `h(τ, ξ)` with `h_τ + W'(h) = 0`, `h(0, ξ) = ξ`.
pub fn h_flow(xi: f64, tau: f64, potential: &dyn Potential) -> Result<f64> {
    if !(tau >= 0.0) {
        return Err(Error::Domain(format!("τ = {tau} must be nonnegative")));
    }
    if tau == 0.0 || xi == 0.0 {
        return Ok(xi);
    }
    let opts = OdeOptions { h0: 1e-3, ..OdeOptions::default() };
    let run = ode::solve(&ScalarFlow(potential), 0.0, &[xi], tau, &[], None, &opts)?;
    Ok(run.ys.last().unwrap()[0])
}

/// Constants `(c, C)` of the moving-layer rule: `c = min u'(x)|x|^{1+2s}`
/// over `1 ≤ |x| ≤ 10`, `C` the Lipschitz constant of `W'` on `[−1, 2]`.
pub fn moving_layer_constants(field: &LayerField, potential: &dyn Potential) -> Result<(f64, f64)> {
    let p = 1.0 + 2.0 * field.s;
    let du = field.u.derivative()?;
    let mut c = f64::INFINITY;
    for k in 0..=900 {
        let x = 1.0 + 9.0 * k as f64 / 900.0;
        for y in [x, -x] {
            c = c.min(interp_at(&du, y) * x.powf(p));
        }
    }
    if !(c > 0.0) {
        return Err(Error::Validation { assumption: "u' > 0 on 1 ≤ |x| ≤ 10", detail: format!("c = {c}") });
    }
    Ok((c, potential.lipschitz_dw(-1.0, 2.0)))
}

/// `K_ε = (C + μ) κ^{2s+1} ε^{−2s} / (c μ)`.
pub fn moving_layer_k(c: f64, big_c: f64, mu: f64, kappa: f64, eps: f64, s: f64) -> f64 {
    (big_c + mu) / c * kappa.powf(2.0 * s + 1.0) * eps.powf(-2.0 * s) / mu
}

#[derive(Debug, Clone, Serialize)]
pub struct MovingLayerParams {
    pub epsilon: f64,
    pub rho: f64,
    pub y: f64,
    pub mu: f64,
    pub kappa: f64,
    /// `K_ε`; the rule value when not given.
    pub k: Option<f64>,
    /// Time horizon in units of `ε^{2s+1}/μ`.
    pub horizon: f64,
    pub times: usize,
    pub half_width: f64,
    pub per_eps: f64,
}

impl MovingLayerParams {
    pub fn new(epsilon: f64, rho: f64, y: f64, mu: f64) -> Self {
        Self { epsilon, rho, y, mu, kappa: epsilon.powf(0.8), k: None, horizon: 8.0, times: 40, half_width: 2.0, per_eps: 16.0 }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MovingLayerReport {
    pub c: f64,
    pub big_c: f64,
    pub k: f64,
    pub min: f64,
    pub argmin: (f64, f64),
    /// `−10⁻³ ε^{−2s}`.
    pub tolerance: f64,
    pub times: Vec<f64>,
    pub min_per_time: Vec<f64>,
}

impl MovingLayerReport {
    pub fn holds(&self) -> bool {
        self.min >= self.tolerance
    }
}

/// `x(t) = y + Kϱ(e^{−μt/ε^{2s+1}} − 1)`.
pub fn moving_layer_centre(p: &MovingLayerParams, k: f64, s: f64, t: f64) -> f64 {
    p.y + k * p.rho * ((-p.mu * t / p.epsilon.powf(2.0 * s + 1.0)).exp() - 1.0)
}

/// `h(t,x) = u((x − x(t))/ε) + ϱ e^{−μt/ε^{2s+1}}`.
pub fn moving_layer_value(field: &LayerField, p: &MovingLayerParams, k: f64, t: f64, x: f64) -> f64 {
    let s = field.s;
    let xc = moving_layer_centre(p, k, s, t);
    field.u((x - xc) / p.epsilon) + p.rho * (-p.mu * t / p.epsilon.powf(2.0 * s + 1.0)).exp()
}

/// Samples `ε h_t − I_s h + ε^{−2s}W'(h)` on `[0, horizon·ε^{2s+1}/μ]`
/// and `|x − y| ≤ half_width`.
pub fn moving_layer_supersolution(field: &LayerField, potential: &dyn Potential, p: &MovingLayerParams) -> Result<MovingLayerReport> {
    let s = field.s;
    let beta = potential.beta();
    check_eps(p.epsilon)?;
    if !(p.mu > 0.0 && p.mu <= beta / 4.0) {
        return Err(Error::Validation { assumption: "0 < μ ≤ β/4", detail: format!("μ = {}, β = {beta}", p.mu) });
    }
    if !(p.rho >= 0.0) {
        return Err(Error::Validation { assumption: "ϱ ≥ 0", detail: format!("ϱ = {}", p.rho) });
    }
    let (c, big_c) = moving_layer_constants(field, potential)?;
    let rule = moving_layer_k(c, big_c, p.mu, p.kappa, p.epsilon, s);
    let k = match p.k {
        Some(k) if k < rule * (1.0 - 1e-9) => {
            return Err(Error::Validation { assumption: "K_ε rule", detail: format!("K_ε = {k} below (C + μ)κ^{{2s+1}}ε^{{−2s}}/(cμ) = {rule}") });
        }
        Some(k) => k,
        None => rule,
    };
    let e = p.epsilon;
    let e2s = e.powf(2.0 * s);
    let dt = fd_step(e, s);
    let t_end = p.horizon * e.powf(2.0 * s + 1.0) / p.mu;
    let nt = p.times.max(2);
    let nx = (2.0 * p.half_width * p.per_eps / e).ceil() as usize + 1;
    let mut min = f64::INFINITY;
    let mut argmin = (f64::NAN, f64::NAN);
    let mut times = Vec::with_capacity(nt);
    let mut min_per_time = Vec::with_capacity(nt);
    for kt in 0..nt {
        let t = dt + (t_end - dt) * kt as f64 / (nt - 1) as f64;
        let xc = moving_layer_centre(p, k, s, t);
        let mut m = f64::INFINITY;
        for j in 0..nx {
            let x = p.y - p.half_width + 2.0 * p.half_width * j as f64 / (nx - 1) as f64;
            let h = moving_layer_value(field, p, k, t, x);
            let ht = (moving_layer_value(field, p, k, t + dt, x) - moving_layer_value(field, p, k, t - dt, x)) / (2.0 * dt);
            let r = e * ht - field.iu((x - xc) / e) / e2s + potential.dw(h) / e2s;
            if r < m {
                m = r;
            }
            if r < min {
                min = r;
                argmin = (t, x);
            }
        }
        times.push(t);
        min_per_time.push(m);
    }
    Ok(MovingLayerReport { c, big_c, k, min, argmin, tolerance: -1e-3 / e2s, times, min_per_time })
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct TailBound {
    /// `sup_x [u(−(x − x₂)/ε) + u((x − x₃)/ε) − 1]` for `x₃ − x₂ = θ`.
    pub sup: f64,
    /// Largest foreign-layer tail within `θ/2` of a transition point.
    pub envelope: f64,
    /// `envelope / (ε^{2s} θ^{−2s})`.
    pub constant: f64,
}

impl TailBound {
    pub fn holds(&self) -> bool {
        self.sup <= self.envelope + 1e-12
    }
}

/// Two oppositely oriented layers at distance `theta`: the excess of their
/// sum over `1` against `C ε^{2s} θ^{−2s}`.
pub fn three_layer_tail_bound(field: &LayerField, eps: f64, theta: f64) -> Result<TailBound> {
    check_eps(eps)?;
    if !(theta > 0.0) {
        return Err(Error::Domain(format!("θ = {theta} must be positive")));
    }
    let s = field.s;
    let (x2, x3) = (0.0, theta);
    let f = |x: f64| field.u(-(x - x2) / eps) + field.u((x - x3) / eps) - 1.0;
    let span = 40.0 * theta.max(eps);
    let n = ((2.0 * span + theta) * 40.0 / eps).ceil() as usize;
    let mut sup = f64::NEG_INFINITY;
    let mut envelope = 0.0f64;
    for j in 0..=n {
        let x = -span + (2.0 * span + theta) * j as f64 / n as f64;
        sup = sup.max(f(x));
        if (x - x2).abs() <= 0.5 * theta {
            envelope = envelope.max(field.u((x - x3) / eps));
        }
        if (x - x3).abs() <= 0.5 * theta {
            envelope = envelope.max(field.u(-(x - x2) / eps));
        }
    }
    let scale = eps.powf(2.0 * s) * theta.powf(-2.0 * s);
    Ok(TailBound { sup, envelope, constant: envelope / scale })
}
