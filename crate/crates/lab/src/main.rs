use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use pnlab::{load_config, run_scenario, scenario_by_name, scenario_names, LabError, ScenarioConfig};

/// Run a named scenario of the fractional Peierls-Nabarro laboratory.
#[derive(Debug, Parser)]
#[command(name = "pnlab", version)]
struct Cli {
    /// Scenario name; `list` prints the registry.
    scenario: String,
    /// Flat TOML config naming the same scenario.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory; defaults to `output_dir` from the config, then `runs/<scenario>`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Sweep one parameter: `name=v1,v2,...`.
    #[arg(long)]
    sweep: Option<String>,
    /// Worker cap for sweeps.
    #[arg(long, env = "PNLAB_THREADS")]
    threads: Option<usize>,
}

fn parse_sweep(spec: &str) -> Result<(String, Vec<f64>), LabError> {
    let (name, vals) = spec.split_once('=').ok_or_else(|| LabError::Config(format!("--sweep expects name=v1,v2,..., got `{spec}`")))?;
    let values = vals
        .split(',')
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .map(|v| v.parse::<f64>().map_err(|_| LabError::Config(format!("bad sweep value `{v}`"))))
        .collect::<Result<Vec<_>, _>>()?;
    Ok((name.trim().to_string(), values))
}

fn prepare(cli: &Cli) -> Result<(ScenarioConfig, PathBuf), LabError> {
    let path = cli.config.as_ref().ok_or_else(|| LabError::Config("--config <file> is required".into()))?;
    let text = std::fs::read_to_string(path)?;
    let mut cfg = load_config(&text, Some(&cli.scenario))?;
    if let Some(spec) = &cli.sweep {
        let (param, values) = parse_sweep(spec)?;
        cfg.sweep_scenario = cfg.scenario.clone();
        cfg.sweep_param = param;
        cfg.sweep_values = values;
        cfg.scenario = "sweep".into();
    }
    let out = cli
        .out
        .clone()
        .or_else(|| cfg.output_dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("runs").join(&cli.scenario));
    Ok((cfg, out))
}

fn fail(e: &LabError) -> ExitCode {
    eprintln!("{}", e.to_json());
    ExitCode::from(2)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.scenario == "list" {
        for name in scenario_names() {
            let s = scenario_by_name(name).expect("registered");
            println!("{name:16} {}", s.about());
        }
        return ExitCode::SUCCESS;
    }
    if let Some(n) = cli.threads {
        std::env::set_var("PNLAB_THREADS", n.to_string());
    }
    let (cfg, out) = match prepare(&cli) {
        Ok(v) => v,
        Err(e) => return fail(&e),
    };
    match run_scenario(&cfg, &out) {
        Ok(m) => {
            for c in &m.checks {
                println!("{} {} ({})", if c.passed { "PASS" } else { "FAIL" }, c.name, c.bound);
            }
            if let Some(e) = &m.error {
                eprintln!("{e}");
            }
            println!("{}: {:?} -> {}", m.scenario, m.status, out.join("manifest.json").display());
            ExitCode::from(m.exit_code() as u8)
        }
        Err(e) => fail(&e),
    }
}
