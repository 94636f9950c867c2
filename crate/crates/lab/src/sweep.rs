//! Parameter sweeps: one run per value, in parallel, aggregated by value.

use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use crate::config::with_param;
use crate::output::num;
use crate::scenarios::Scenario;
use crate::{run_scenario, LabError, RunManifest, RunOutput, ScenarioConfig, Status};

pub const AGGREGATE: &str = "aggregate.csv";
pub const COLUMNS: [&str; 7] = ["value", "status", "t_c", "min_residual", "rate", "layer_distance", "error"];

/// Worker cap from `PNLAB_THREADS`, else the available parallelism.
pub fn thread_cap() -> usize {
    std::env::var("PNLAB_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|n| *n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
}

#[derive(Debug, Clone)]
pub struct SweepRow {
    pub value: f64,
    pub dir: String,
    pub status: Status,
    pub manifest: Option<RunManifest>,
    pub error: Option<String>,
}

impl SweepRow {
    fn metric(&self, name: &str) -> String {
        self.manifest.as_ref().and_then(|m| m.metric(name)).map(num).unwrap_or_default()
    }
}

/// Runs `base` once per value of `param` into `out/runs/NNN`, using at most
/// `threads` workers, and writes the aggregate table. Rows are sorted by value.
pub fn run_sweep(
    base: &ScenarioConfig,
    param: &str,
    values: &[f64],
    out: &mut RunOutput,
    threads: usize,
) -> Result<Vec<SweepRow>, LabError> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(LabError::Config("sweep values must be finite".into()));
    }
    // Unknown or non-numeric parameters fail before any run starts.
    with_param(base, param, 0.0)?;
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let cfgs: Vec<Result<ScenarioConfig, LabError>> = sorted.iter().map(|v| with_param(base, param, *v)).collect();
    let dir = out.dir().to_path_buf();
    let rows: Mutex<Vec<Option<SweepRow>>> = Mutex::new(vec![None; sorted.len()]);
    let next = AtomicUsize::new(0);
    let workers = threads.max(1).min(sorted.len().max(1));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= sorted.len() {
                    break;
                }
                let sub = format!("runs/{i:03}");
                let row = one_row(&cfgs[i], sorted[i], &dir.join(&sub), sub);
                rows.lock().expect("rows lock")[i] = Some(row);
            });
        }
    });
    let rows: Vec<SweepRow> = rows.into_inner().expect("rows lock").into_iter().map(|r| r.expect("row ran")).collect();
    for r in &rows {
        if r.manifest.is_some() {
            out.adopt(&format!("{}/{}", r.dir, crate::output::MANIFEST))?;
        }
    }
    let table = rows.iter().map(|r| {
        vec![
            num(r.value),
            format!("{:?}", r.status).to_lowercase(),
            r.metric("t_c"),
            r.metric("min_residual"),
            r.metric("rate"),
            r.metric("layer_distance"),
            r.error.clone().unwrap_or_default(),
        ]
    });
    out.csv_text(AGGREGATE, &COLUMNS, table.collect::<Vec<_>>())?;
    let failed = rows.iter().filter(|r| r.status != Status::Pass).count();
    out.metric("rows", rows.len() as f64);
    out.metric("failed_rows", failed as f64);
    out.check("rows_pass", failed == 0, failed as f64, "every row passes");
    Ok(rows)
}

fn one_row(cfg: &Result<ScenarioConfig, LabError>, value: f64, dir: &Path, sub: String) -> SweepRow {
    let fail = |e: &LabError| SweepRow { value, dir: sub.clone(), status: Status::Error, manifest: None, error: Some(e.to_string()) };
    let cfg = match cfg {
        Ok(c) => c,
        Err(e) => return fail(e),
    };
    match run_scenario(cfg, dir) {
        Ok(m) => {
            let error = m.error.as_ref().map(|e| e["message"].as_str().unwrap_or_default().to_string());
            SweepRow { value, dir: sub.clone(), status: m.status, manifest: Some(m), error }
        }
        Err(e) => fail(&e),
    }
}

/// Scenario form: sweeps `sweep_param` of `sweep_scenario` over `sweep_values`.
pub struct SweepScenario;

impl Scenario for SweepScenario {
    fn name(&self) -> &'static str {
        "sweep"
    }

    fn about(&self) -> &'static str {
        "run another scenario once per parameter value and aggregate"
    }

    fn run(&self, cfg: &ScenarioConfig, out: &mut RunOutput) -> Result<(), LabError> {
        let target = crate::scenario_by_name(&cfg.sweep_scenario)?;
        if target.name() == "sweep" {
            return Err(LabError::Config("a sweep cannot sweep sweeps".into()));
        }
        let base = ScenarioConfig {
            scenario: target.name().to_string(),
            sweep_scenario: String::new(),
            sweep_param: String::new(),
            sweep_values: vec![],
            ..cfg.clone()
        };
        base.validate()?;
        run_sweep(&base, &cfg.sweep_param, &cfg.sweep_values, out, thread_cap())?;
        Ok(())
    }
}
