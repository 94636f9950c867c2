//! Scenario runner for the fractional Peierls-Nabarro laboratory.
//!
//! A run reads a flat TOML config, executes one named scenario from the
//! [`scenarios`] registry and writes CSV tables, JSON-lines events and a
//! `manifest.json` with checksums into its output directory.

pub mod config;
pub mod error;
pub mod output;
pub mod scenarios;
pub mod sweep;

use std::path::Path;

pub use config::ScenarioConfig;
pub use error::LabError;
pub use output::{verify_manifest, RunManifest, RunOutput, Status};
pub use scenarios::{scenario_by_name, scenario_names, Scenario};

/// Builds the effective configuration from the text of a config file.
///
/// The file must name its scenario; when `cli_scenario` is given it must
/// agree with it.
pub fn load_config(text: &str, cli_scenario: Option<&str>) -> Result<ScenarioConfig, LabError> {
    let file = config::parse_flat(text)?;
    let name = match file.get("scenario") {
        Some(toml::Value::String(s)) => s.clone(),
        Some(_) => return Err(LabError::Config("`scenario` must be a string".into())),
        None => return Err(LabError::Config("missing `scenario`".into())),
    };
    if let Some(cli) = cli_scenario {
        if cli != name {
            return Err(LabError::Config(format!("config names scenario `{name}` but `{cli}` was requested")));
        }
    }
    let scenario = scenario_by_name(&name)?;
    // A sweep takes the defaults of the scenario it sweeps.
    let defaults = match (name.as_str(), file.get("sweep_scenario")) {
        ("sweep", Some(toml::Value::String(target))) => scenario_by_name(target)?.defaults(),
        _ => scenario.defaults(),
    };
    let cfg = config::resolve(&file, &defaults)?;
    cfg.validate()?;
    Ok(cfg)
}

/// Runs the configured scenario into `out_dir` and writes its manifest.
///
/// Invalid configurations are rejected before anything is written. Errors
/// raised while the scenario runs are recorded in the manifest, whose status
/// is then [`Status::Error`].
pub fn run_scenario(cfg: &ScenarioConfig, out_dir: &Path) -> Result<RunManifest, LabError> {
    cfg.validate()?;
    let scenario = scenario_by_name(&cfg.scenario)?;
    let mut out = RunOutput::create(out_dir)?;
    let result = out.time("total", |out| scenario.run(cfg, out));
    let manifest = out.finish(cfg, result.err().as_ref())?;
    Ok(manifest)
}
