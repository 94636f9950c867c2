//! Periodic multi-well potentials and external stress fields.
//!
//! Both are trait objects registered by name so that configuration files can
//! select them at runtime.

use std::f64::consts::PI;
use std::fmt::Debug;
use std::sync::Arc;

use serde::Serialize;

use crate::{Error, Result};

/// A 1-periodic potential with minima on the integers.
pub trait Potential: Send + Sync + Debug {
    fn name(&self) -> &'static str;
    /// Derivative of order `0..=3` at `v`.
    fn eval(&self, v: f64, order: u8) -> f64;

    fn w(&self, v: f64) -> f64 {
        self.eval(v, 0)
    }
    fn dw(&self, v: f64) -> f64 {
        self.eval(v, 1)
    }
    fn d2w(&self, v: f64) -> f64 {
        self.eval(v, 2)
    }
    /// `β = W''(0)`.
    fn beta(&self) -> f64 {
        self.eval(0.0, 2)
    }
    /// Lipschitz constant of `W'` on `[a, b]`, from a fine sampling of `|W''|`.
    fn lipschitz_dw(&self, a: f64, b: f64) -> f64 {
        let n = 20_000;
        (0..=n).map(|k| self.d2w(a + (b - a) * k as f64 / n as f64).abs()).fold(0.0, f64::max)
    }
}

fn frac_part(v: f64) -> f64 {
    v - v.round()
}

/// `W(v) = (1 - cos 2πv) / (4π²)`, `β = 1`.
#[derive(Debug, Clone, Copy, Default)]
pub struct Cosine;

impl Potential for Cosine {
    fn name(&self) -> &'static str {
        "cosine"
    }
    fn eval(&self, v: f64, order: u8) -> f64 {
        let a = 2.0 * PI * frac_part(v);
        match order {
            0 => (1.0 - a.cos()) / (4.0 * PI * PI),
            1 => a.sin() / (2.0 * PI),
            2 => a.cos(),
            _ => -2.0 * PI * a.sin(),
        }
    }
}

/// `W(v) = sin²(πv) / π²`, `β = 2`.
#[derive(Debug, Clone, Copy, Default)]
pub struct SineSquared;

impl Potential for SineSquared {
    fn name(&self) -> &'static str {
        "sin2"
    }
    fn eval(&self, v: f64, order: u8) -> f64 {
        let a = 2.0 * PI * frac_part(v);
        match order {
            0 => (1.0 - a.cos()) / (2.0 * PI * PI),
            1 => a.sin() / PI,
            2 => 2.0 * a.cos(),
            _ => -4.0 * PI * a.sin(),
        }
    }
}

/// `W(v) = v²`; not periodic, kept as a validation counterexample.
#[derive(Debug, Clone, Copy, Default)]
pub struct Quadratic;

impl Potential for Quadratic {
    fn name(&self) -> &'static str {
        "quadratic"
    }
    fn eval(&self, v: f64, order: u8) -> f64 {
        match order {
            0 => v * v,
            1 => 2.0 * v,
            2 => 2.0,
            _ => 0.0,
        }
    }
}

/// Names accepted by [`potential_by_name`].
pub fn potential_names() -> &'static [&'static str] {
    &["default", "cosine", "sin2", "quadratic"]
}

pub fn potential_by_name(name: &str) -> Result<Arc<dyn Potential>> {
    match name {
        "default" | "cosine" => Ok(Arc::new(Cosine)),
        "sin2" => Ok(Arc::new(SineSquared)),
        "quadratic" => Ok(Arc::new(Quadratic)),
        other => Err(Error::Config(format!("unknown potential '{other}'"))),
    }
}

/// `W^{(order)}(v)` with a range check on the order.
pub fn w_eval(spec: &dyn Potential, v: f64, order: u8) -> Result<f64> {
    if order > 3 {
        return Err(Error::Domain(format!("derivative order {order} not in 0..=3")));
    }
    Ok(spec.eval(v, order))
}

/// Outcome of [`validate_potential`].
#[derive(Debug, Clone, Serialize)]
pub struct PotentialReport {
    pub name: String,
    pub periodic: bool,
    pub zero_on_integers: bool,
    pub positive_off_integers: bool,
    pub beta: f64,
}

/// Checks periodicity, the zero set and `W''(0) > 0`, failing on the first
/// violated assumption.
pub fn validate_potential(spec: &dyn Potential) -> Result<PotentialReport> {
    let lattice: Vec<f64> = (0..200).map(|k| -2.0 + 0.0213 * k as f64).collect();
    for &v in &lattice {
        for order in 0..=3 {
            let (a, b) = (spec.eval(v, order), spec.eval(v + 1.0, order));
            if (a - b).abs() > 1e-12 * (1.0 + a.abs()) {
                return Err(Error::Validation { assumption: "periodicity", detail: format!("W^({order})({v}) = {a} but W^({order})({}) = {b}", v + 1.0) });
            }
        }
    }
    for k in -3..=3 {
        let w = spec.w(k as f64);
        if w.abs() > 1e-14 {
            return Err(Error::Validation { assumption: "zero on integers", detail: format!("W({k}) = {w}") });
        }
    }
    for &v in &lattice {
        if (v - v.round()).abs() > 1e-9 && spec.w(v) <= 0.0 {
            return Err(Error::Validation { assumption: "positivity", detail: format!("W({v}) = {}", spec.w(v)) });
        }
    }
    let beta = spec.beta();
    if !(beta > 0.0) {
        return Err(Error::Validation { assumption: "W''(0) > 0", detail: format!("W''(0) = {beta}") });
    }
    Ok(PotentialReport { name: spec.name().into(), periodic: true, zero_on_integers: true, positive_off_integers: true, beta })
}

/// An external stress `σ(t, x)` with known bounds.
pub trait Stress: Send + Sync + Debug {
    fn name(&self) -> &'static str;
    fn sigma(&self, t: f64, x: f64) -> f64;
    fn sigma_x(&self, t: f64, x: f64) -> f64;
    fn sigma_t(&self, t: f64, x: f64) -> f64;
    /// Bound `M` on `|σ|`, `|σ_x|`, `|σ_t|`.
    fn bound(&self) -> f64;
    /// Hölder exponent and constant of `σ_x`.
    fn holder(&self) -> (f64, f64);
    /// `I_s σ(t, ·)` at `x`.
    fn frac_lap(&self, s: f64, t: f64, x: f64) -> f64;
    fn is_zero(&self) -> bool {
        false
    }
}

/// `σ ≡ 0`.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroStress;

impl Stress for ZeroStress {
    fn name(&self) -> &'static str {
        "zero"
    }
    fn sigma(&self, _: f64, _: f64) -> f64 {
        0.0
    }
    fn sigma_x(&self, _: f64, _: f64) -> f64 {
        0.0
    }
    fn sigma_t(&self, _: f64, _: f64) -> f64 {
        0.0
    }
    fn bound(&self) -> f64 {
        0.0
    }
    fn holder(&self) -> (f64, f64) {
        (1.0, 0.0)
    }
    fn frac_lap(&self, _: f64, _: f64, _: f64) -> f64 {
        0.0
    }
    fn is_zero(&self) -> bool {
        true
    }
}

/// `σ ≡ A`.
#[derive(Debug, Clone, Copy)]
pub struct ConstantStress {
    pub amplitude: f64,
}

impl Stress for ConstantStress {
    fn name(&self) -> &'static str {
        "constant"
    }
    fn sigma(&self, _: f64, _: f64) -> f64 {
        self.amplitude
    }
    fn sigma_x(&self, _: f64, _: f64) -> f64 {
        0.0
    }
    fn sigma_t(&self, _: f64, _: f64) -> f64 {
        0.0
    }
    fn bound(&self) -> f64 {
        self.amplitude.abs()
    }
    fn holder(&self) -> (f64, f64) {
        (1.0, 0.0)
    }
    fn frac_lap(&self, _: f64, _: f64, _: f64) -> f64 {
        0.0
    }
    fn is_zero(&self) -> bool {
        self.amplitude == 0.0
    }
}

/// `σ(t, x) = A sin(ωt + kx)`.
#[derive(Debug, Clone, Copy)]
pub struct SineStress {
    pub amplitude: f64,
    pub omega: f64,
    pub wavenumber: f64,
    pub alpha: f64,
}

impl SineStress {
    pub fn new(amplitude: f64, omega: f64, wavenumber: f64) -> Self {
        Self { amplitude, omega, wavenumber, alpha: 0.75 }
    }
}

impl Stress for SineStress {
    fn name(&self) -> &'static str {
        "sine"
    }
    fn sigma(&self, t: f64, x: f64) -> f64 {
        self.amplitude * (self.omega * t + self.wavenumber * x).sin()
    }
    fn sigma_x(&self, t: f64, x: f64) -> f64 {
        self.amplitude * self.wavenumber * (self.omega * t + self.wavenumber * x).cos()
    }
    fn sigma_t(&self, t: f64, x: f64) -> f64 {
        self.amplitude * self.omega * (self.omega * t + self.wavenumber * x).cos()
    }
    fn bound(&self) -> f64 {
        let a = self.amplitude.abs();
        a.max(a * self.wavenumber.abs()).max(a * self.omega.abs())
    }
    fn holder(&self) -> (f64, f64) {
        let k = self.wavenumber.abs();
        (self.alpha, self.amplitude.abs() * k.powf(1.0 + self.alpha) * 2f64.powf(1.0 - self.alpha))
    }
    fn frac_lap(&self, s: f64, t: f64, x: f64) -> f64 {
        // I_s e^{ikx} = -C(s)|k|^{2s} e^{ikx}, C(s) = π / (Γ(1+2s) sin πs).
        let c = PI / (libm::tgamma(1.0 + 2.0 * s) * (PI * s).sin());
        -c * self.wavenumber.abs().powf(2.0 * s) * self.sigma(t, x)
    }
}

/// Names accepted by [`stress_by_name`].
pub fn stress_names() -> &'static [&'static str] {
    &["zero", "constant", "sine"]
}

/// Stress preset from its name and the parameters `(A, ω, k)`; unused
/// parameters are ignored.
pub fn stress_by_name(name: &str, amplitude: f64, omega: f64, wavenumber: f64) -> Result<Arc<dyn Stress>> {
    match name {
        "zero" => Ok(Arc::new(ZeroStress)),
        "constant" => Ok(Arc::new(ConstantStress { amplitude })),
        "sine" => Ok(Arc::new(SineStress::new(amplitude, omega, wavenumber))),
        other => Err(Error::Config(format!("unknown stress preset '{other}'"))),
    }
}

/// Checks that the reported bound dominates sampled values and derivatives.
pub fn validate_stress(stress: &dyn Stress) -> Result<f64> {
    let m = stress.bound();
    for i in 0..60 {
        for j in 0..60 {
            let (t, x) = (0.05 * i as f64, -3.0 + 0.1 * j as f64);
            let worst = stress.sigma(t, x).abs().max(stress.sigma_x(t, x).abs()).max(stress.sigma_t(t, x).abs());
            if worst > m * (1.0 + 1e-12) + 1e-15 {
                return Err(Error::Validation { assumption: "stress bound", detail: format!("sample {worst} exceeds M = {m} at ({t}, {x})") });
            }
        }
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_potential_values() {
        let w = Cosine;
        assert_eq!(w.w(0.0), 0.0);
        assert!((w.w(0.5) - 1.0 / (2.0 * PI * PI)).abs() < 1e-15);
        assert!((w.dw(0.25) - 1.0 / (2.0 * PI)).abs() < 1e-15);
        assert_eq!(w.beta(), 1.0);
        assert!(w_eval(&w, 0.1, 4).is_err());
    }

    #[test]
    fn validation_outcomes() {
        assert_eq!(validate_potential(&Cosine).unwrap().beta, 1.0);
        assert_eq!(validate_potential(&SineSquared).unwrap().beta, 2.0);
        match validate_potential(&Quadratic) {
            Err(Error::Validation { assumption, .. }) => assert_eq!(assumption, "periodicity"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn stress_bounds_hold() {
        for s in ["zero", "constant", "sine"] {
            let st = stress_by_name(s, 0.3, 2.0, 1.5).unwrap();
            validate_stress(st.as_ref()).unwrap();
        }
    }
}
