//! Flat run configuration.
//!
//! A config file is a TOML document made of scalar and array keys only. The
//! effective configuration is built in three layers: global defaults, the
//! scenario's own defaults, then the file.

use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::LabError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenario: String,
    pub s: f64,
    pub potential: String,
    pub stress: String,
    pub stress_amplitude: f64,
    pub stress_omega: f64,
    pub stress_wavenumber: f64,
    /// Half width and node count of the layer grid.
    pub layer_half_width: f64,
    pub layer_points: usize,
    /// Pinning coefficient; computed from the layer when absent.
    pub gamma: Option<f64>,
    pub epsilon: f64,
    pub positions: Vec<f64>,
    pub delta: f64,
    /// `none`, `widen` or `shrink`.
    pub delta_mode: String,
    /// δ values of the collision-time table.
    pub deltas: Vec<f64>,
    pub t_max: f64,
    /// Trajectory output points.
    pub samples: usize,
    pub grid_half_width: f64,
    /// Grid spacing is `ε / grid_div`.
    pub grid_div: f64,
    /// Evolution horizon; scenario-dependent when absent.
    pub t_end: Option<f64>,
    pub dt_scale: f64,
    pub snapshot_dt: Option<f64>,
    pub stepper: String,
    pub level: f64,
    /// Fit window start after the crossing drop, in units of `ε^{2s+1}/β`.
    pub fit_offset: f64,
    /// `θ_ε = theta_scale · ε^{theta_exponent}`.
    pub theta_scale: f64,
    pub theta_exponent: f64,
    pub kappa_exponent: f64,
    pub barrier: String,
    pub calibrate: bool,
    pub residual_times: usize,
    pub residual_margin: f64,
    pub residual_per_eps: f64,
    /// Hat offset constant; `choose_k` when absent.
    pub hat_k: Option<f64>,
    pub rho: f64,
    pub mu: Option<f64>,
    /// Reserved; no computation is random.
    pub seed: u64,
    pub output_dir: Option<String>,
    pub sweep_scenario: String,
    pub sweep_param: String,
    pub sweep_values: Vec<f64>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            scenario: String::new(),
            s: 0.5,
            potential: "default".into(),
            stress: "zero".into(),
            stress_amplitude: 0.0,
            stress_omega: 1.0,
            stress_wavenumber: 1.0,
            layer_half_width: 60.0,
            layer_points: 6001,
            gamma: None,
            epsilon: 0.05,
            positions: vec![0.0, 1.0],
            delta: 0.0,
            delta_mode: "none".into(),
            deltas: vec![],
            t_max: 10.0,
            samples: 200,
            grid_half_width: 2.0,
            grid_div: 8.0,
            t_end: None,
            dt_scale: 1.0,
            snapshot_dt: None,
            stepper: "imex".into(),
            level: 0.5,
            fit_offset: 5.0,
            theta_scale: 1.0,
            theta_exponent: 0.4,
            kappa_exponent: 0.8,
            barrier: "two_upper".into(),
            calibrate: true,
            residual_times: 48,
            residual_margin: 2.0,
            residual_per_eps: 16.0,
            hat_k: None,
            rho: 0.05,
            mu: None,
            seed: 0,
            output_dir: None,
            sweep_scenario: String::new(),
            sweep_param: String::new(),
            sweep_values: vec![],
        }
    }
}

impl ScenarioConfig {
    pub fn theta(&self) -> f64 {
        self.theta_scale * self.epsilon.powf(self.theta_exponent)
    }

    /// Resolved configuration as a flat table (absent options omitted).
    pub fn to_table(&self) -> Table {
        Table::try_from(self).expect("config serializes to a table")
    }

    /// Names of all keys, including optional ones.
    pub fn keys() -> &'static [&'static str] {
        &[
            "scenario", "s", "potential", "stress", "stress_amplitude", "stress_omega", "stress_wavenumber",
            "layer_half_width", "layer_points", "gamma", "epsilon", "positions", "delta", "delta_mode", "deltas",
            "t_max", "samples", "grid_half_width", "grid_div", "t_end", "dt_scale", "snapshot_dt", "stepper", "level",
            "fit_offset", "theta_scale", "theta_exponent", "kappa_exponent", "barrier", "calibrate", "residual_times",
            "residual_margin", "residual_per_eps", "hat_k", "rho", "mu", "seed", "output_dir", "sweep_scenario",
            "sweep_param", "sweep_values",
        ]
    }

    /// Basic range checks shared by all scenarios; the numerical modules
    /// validate their own inputs again.
    pub fn validate(&self) -> Result<(), LabError> {
        let bad = |m: String| Err(LabError::Config(m));
        if self.scenario.is_empty() {
            return bad("missing `scenario`".into());
        }
        if !(self.s > 0.0 && self.s < 1.0) {
            return bad(format!("s = {} not in (0, 1)", self.s));
        }
        if !(self.epsilon > 0.0 && self.epsilon <= 1.0) {
            return bad(format!("epsilon = {} not in (0, 1]", self.epsilon));
        }
        if self.layer_points < 101 || self.layer_points % 2 == 0 {
            return bad(format!("layer_points = {} must be odd and at least 101", self.layer_points));
        }
        if !(self.layer_half_width > 0.0 && self.grid_half_width > 0.0 && self.grid_div >= 4.0) {
            return bad("grid sizes must be positive and grid_div at least 4".into());
        }
        if let Some(g) = self.gamma {
            if !(g > 0.0 && g.is_finite()) {
                return bad(format!("gamma = {g}"));
            }
        }
        if self.positions.iter().any(|x| !x.is_finite()) || self.positions.windows(2).any(|w| !(w[1] > w[0])) {
            return bad(format!("positions must be finite and strictly increasing: {:?}", self.positions));
        }
        if !(0.0..=1.0).contains(&self.delta) || self.deltas.iter().any(|d| !(*d > 0.0 && *d <= 1.0)) {
            return bad("delta values must lie in [0, 1] (table entries in (0, 1])".into());
        }
        if !(self.t_max > 0.0 && self.t_max.is_finite()) || self.t_end.is_some_and(|t| !(t > 0.0 && t.is_finite())) {
            return bad("time horizons must be positive".into());
        }
        if self.samples < 2 || self.residual_times < 1 {
            return bad("samples must be at least 2 and residual_times at least 1".into());
        }
        if !(self.theta_scale > 0.0) || !(self.fit_offset >= 0.0) || !(self.rho >= 0.0) {
            return bad("theta_scale must be positive, fit_offset and rho nonnegative".into());
        }
        Ok(())
    }
}

/// Parses a flat TOML document; nested tables are rejected.
pub fn parse_flat(text: &str) -> Result<Table, LabError> {
    let table: Table = text.parse().map_err(|e: toml::de::Error| LabError::Config(e.message().to_string()))?;
    for (k, v) in &table {
        let nested = match v {
            Value::Table(_) => true,
            Value::Array(a) => a.iter().any(|x| matches!(x, Value::Table(_) | Value::Array(_))),
            _ => false,
        };
        if nested {
            return Err(LabError::Config(format!("key `{k}` is not a scalar or flat array")));
        }
    }
    Ok(table)
}

/// Converts integers to floats where the default is a float, so that
/// `epsilon = 1` and `positions = [0, 1]` are accepted.
fn coerce(base: &Table, key: &str, v: Value) -> Value {
    let float_slot = matches!(base.get(key), Some(Value::Float(_))) || FLOAT_OPTIONS.contains(&key);
    match v {
        Value::Integer(i) if float_slot => Value::Float(i as f64),
        Value::Array(a) => Value::Array(
            a.into_iter()
                .map(|x| match x {
                    Value::Integer(i) => Value::Float(i as f64),
                    x => x,
                })
                .collect(),
        ),
        v => v,
    }
}

const FLOAT_OPTIONS: &[&str] = &["gamma", "t_end", "snapshot_dt", "hat_k", "mu"];

/// Overlays `over` onto `base`, coercing integer literals.
pub fn overlay(base: &mut Table, over: &Table) {
    for (k, v) in over {
        let v = coerce(base, k, v.clone());
        base.insert(k.clone(), v);
    }
}

/// Effective configuration: defaults, then `scenario_defaults`, then `file`.
pub fn resolve(file: &Table, scenario_defaults: &Table) -> Result<ScenarioConfig, LabError> {
    let mut t = ScenarioConfig::default().to_table();
    overlay(&mut t, scenario_defaults);
    overlay(&mut t, file);
    let cfg: ScenarioConfig = Value::Table(t).try_into().map_err(|e: toml::de::Error| LabError::Config(e.message().to_string()))?;
    Ok(cfg)
}

/// Sets one key of a resolved config from a float, as a sweep does.
pub fn with_param(cfg: &ScenarioConfig, key: &str, value: f64) -> Result<ScenarioConfig, LabError> {
    if !ScenarioConfig::keys().contains(&key) {
        return Err(LabError::Config(format!("unknown sweep parameter `{key}`")));
    }
    let mut t = cfg.to_table();
    let v = match t.get(key) {
        Some(Value::Integer(_)) if value >= 0.0 && value.fract() == 0.0 => Value::Integer(value as i64),
        Some(Value::Integer(_)) => return Err(LabError::Config(format!("parameter `{key}` takes a nonnegative integer"))),
        Some(Value::Float(_)) => Value::Float(value),
        None if FLOAT_OPTIONS.contains(&key) => Value::Float(value),
        _ => return Err(LabError::Config(format!("parameter `{key}` is not numeric"))),
    };
    t.insert(key.to_string(), v);
    Value::Table(t).try_into().map_err(|e: toml::de::Error| LabError::Config(e.message().to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integers_coerce_and_nesting_is_rejected() {
        let t = parse_flat("scenario = \"layer\"\nepsilon = 1\npositions = [0, 2]\ngamma = 3").unwrap();
        let cfg = resolve(&t, &Table::new()).unwrap();
        assert_eq!(cfg.epsilon, 1.0);
        assert_eq!(cfg.positions, vec![0.0, 2.0]);
        assert_eq!(cfg.gamma, Some(3.0));
        assert!(parse_flat("[a]\nb = 1").is_err());
        assert!(resolve(&parse_flat("nope = 1").unwrap(), &Table::new()).is_err());
    }

    #[test]
    fn params_round_trip() {
        let cfg = ScenarioConfig { scenario: "x".into(), ..Default::default() };
        let c2 = with_param(&cfg, "delta", 0.25).unwrap();
        assert_eq!(c2.delta, 0.25);
        let c3 = with_param(&cfg, "t_end", 2.0).unwrap();
        assert_eq!(c3.t_end, Some(2.0));
        assert_eq!(with_param(&cfg, "samples", 7.0).unwrap().samples, 7);
        assert!(with_param(&cfg, "stepper", 1.0).is_err());
        assert!(with_param(&cfg, "bogus", 1.0).is_err());
    }
}
