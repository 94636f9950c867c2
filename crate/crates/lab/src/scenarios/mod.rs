//! Named scenarios, selected at run time from a registry.

mod barrier;
mod evolve;
mod layer;
mod particles;

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use pnlab_core::barriers::LayerField;
use pnlab_core::layer::{compute_corrector, compute_layer, Corrector, LayerSolution};
use pnlab_core::nonlocal::Grid;
use pnlab_core::potential::{potential_by_name, stress_by_name, Potential, Stress};
use toml::Table;

use crate::{LabError, RunOutput, ScenarioConfig};

pub trait Scenario: Send + Sync {
    fn name(&self) -> &'static str;
    fn about(&self) -> &'static str;
    /// Keys overriding the global defaults for this scenario.
    fn defaults(&self) -> Table {
        Table::new()
    }
    fn run(&self, cfg: &ScenarioConfig, out: &mut RunOutput) -> Result<(), LabError>;
}

fn registry() -> &'static [Box<dyn Scenario>] {
    static REG: OnceLock<Vec<Box<dyn Scenario>>> = OnceLock::new();
    REG.get_or_init(|| {
        vec![
            Box::new(layer::LayerScenario),
            Box::new(layer::CorrectorScenario),
            Box::new(particles::TwoCollide),
            Box::new(particles::ThreeSimple),
            Box::new(particles::ThreeTriple),
            Box::new(particles::Particles),
            Box::new(barrier::BarrierTwo),
            Box::new(barrier::BarrierThree),
            Box::new(barrier::BarrierCheck),
            Box::new(evolve::DecayTwo),
            Box::new(evolve::DecayThree),
            Box::new(evolve::Heteroclinic),
            Box::new(evolve::Evolve),
            Box::new(crate::sweep::SweepScenario),
        ]
    })
}

pub fn scenario_names() -> Vec<&'static str> {
    registry().iter().map(|s| s.name()).collect()
}

pub fn scenario_by_name(name: &str) -> Result<&'static dyn Scenario, LabError> {
    registry()
        .iter()
        .find(|s| s.name() == name)
        .map(|b| b.as_ref())
        .ok_or_else(|| LabError::Config(format!("unknown scenario `{name}` (known: {})", scenario_names().join(", "))))
}

/// Builds a defaults table from `(key, value)` pairs.
pub(crate) fn table<const N: usize>(pairs: [(&str, toml::Value); N]) -> Table {
    pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

pub(crate) fn floats(xs: &[f64]) -> toml::Value {
    toml::Value::Array(xs.iter().map(|x| toml::Value::Float(*x)).collect())
}

pub(crate) fn potential(cfg: &ScenarioConfig) -> Result<Arc<dyn Potential>, LabError> {
    Ok(potential_by_name(&cfg.potential)?)
}

pub(crate) fn stress(cfg: &ScenarioConfig) -> Result<Arc<dyn Stress>, LabError> {
    Ok(stress_by_name(&cfg.stress, cfg.stress_amplitude, cfg.stress_omega, cfg.stress_wavenumber)?)
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct LayerKey {
    potential: String,
    s: u64,
    half_width: u64,
    points: usize,
}

impl LayerKey {
    fn of(cfg: &ScenarioConfig) -> Self {
        Self {
            potential: cfg.potential.clone(),
            s: cfg.s.to_bits(),
            half_width: cfg.layer_half_width.to_bits(),
            points: cfg.layer_points,
        }
    }
}

type Slot<T> = Arc<Mutex<Option<Arc<T>>>>;

/// Process-wide memo: one computation per key, concurrent callers of the
/// same key wait for it.
fn memo<T>(
    cache: &'static OnceLock<Mutex<HashMap<LayerKey, Slot<T>>>>,
    key: LayerKey,
    f: impl FnOnce() -> Result<T, LabError>,
) -> Result<Arc<T>, LabError> {
    let slot = {
        let mut map = cache.get_or_init(Default::default).lock().expect("cache lock");
        map.entry(key).or_default().clone()
    };
    let mut guard = slot.lock().expect("slot lock");
    if let Some(v) = guard.as_ref() {
        return Ok(v.clone());
    }
    let v = Arc::new(f()?);
    *guard = Some(v.clone());
    Ok(v)
}

pub(crate) fn layer(cfg: &ScenarioConfig, out: &mut RunOutput) -> Result<Arc<LayerSolution>, LabError> {
    static CACHE: OnceLock<Mutex<HashMap<LayerKey, Slot<LayerSolution>>>> = OnceLock::new();
    let pot = potential(cfg)?;
    out.time("layer", |_| {
        memo(&CACHE, LayerKey::of(cfg), || {
            let grid = Grid::new(cfg.layer_half_width, cfg.layer_points)?;
            Ok(compute_layer(cfg.s, pot.as_ref(), &grid)?)
        })
    })
}

pub(crate) fn corrector(cfg: &ScenarioConfig, out: &mut RunOutput) -> Result<Arc<Corrector>, LabError> {
    static CACHE: OnceLock<Mutex<HashMap<LayerKey, Slot<Corrector>>>> = OnceLock::new();
    let pot = potential(cfg)?;
    let layer = layer(cfg, out)?;
    out.time("corrector", |_| memo(&CACHE, LayerKey::of(cfg), || Ok(compute_corrector(&layer, cfg.s, pot.as_ref())?)))
}

pub(crate) fn layer_field(cfg: &ScenarioConfig, out: &mut RunOutput) -> Result<Arc<LayerField>, LabError> {
    static CACHE: OnceLock<Mutex<HashMap<LayerKey, Slot<LayerField>>>> = OnceLock::new();
    let layer = layer(cfg, out)?;
    let cor = corrector(cfg, out)?;
    out.time("layer_field", |_| memo(&CACHE, LayerKey::of(cfg), || Ok(LayerField::new(&layer, Some(&cor))?)))
}

/// Configured `γ`, or the one of the computed layer.
pub(crate) fn gamma(cfg: &ScenarioConfig, out: &mut RunOutput) -> Result<f64, LabError> {
    match cfg.gamma {
        Some(g) => Ok(g),
        None => Ok(layer(cfg, out)?.gamma),
    }
}

/// Evolution grid with spacing `ε / grid_div`.
pub(crate) fn evolution_grid(cfg: &ScenarioConfig) -> Result<Grid, LabError> {
    Ok(Grid::with_max_spacing(cfg.grid_half_width, cfg.epsilon / cfg.grid_div)?)
}

pub(crate) fn rel_err(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}

/// Whether the configured potential is the cosine one.
pub(crate) fn is_cosine(cfg: &ScenarioConfig) -> bool {
    matches!(cfg.potential.as_str(), "default" | "cosine")
}
