//! End-to-end acceptance run: one PASS/FAIL line per criterion.

use std::f64::consts::PI;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use pnlab::{load_config, run_scenario, RunManifest, Status};
use pnlab_core::barriers::h_flow;
use pnlab_core::evolution::{build_initial, evolve, fit_decay, stepper_by_name, DatumKind, EvolutionConfig};
use pnlab_core::layer::{compute_layer, LayerSolution};
use pnlab_core::nonlocal::{frac_lap_apply, Grid, Profile, TailModel};
use pnlab_core::particles::{
    choose_constants, choose_k, collision_time_convergence, run_particles, CollisionKind, DeltaMode, ParticleConfig,
};
use pnlab_core::potential::{potential_by_name, Potential, ZeroStress};

type Outcome = Result<String, String>;

const GAMMA: f64 = 2.0 * PI * PI;

fn ensure(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn rel(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}

fn run(text: &str, dir: &Path) -> Result<(RunManifest, f64), String> {
    let cfg = load_config(text, None).map_err(|e| e.to_string())?;
    let t0 = Instant::now();
    let m = run_scenario(&cfg, dir).map_err(|e| e.to_string())?;
    Ok((m, t0.elapsed().as_secs_f64()))
}

fn metric(m: &RunManifest, name: &str) -> Result<f64, String> {
    m.metric(name).ok_or_else(|| format!("{}: no metric `{name}` ({:?})", m.scenario, m.error))
}

fn passed(m: &RunManifest, checks: &[&str]) -> Result<(), String> {
    for c in checks {
        match m.check(c) {
            Some(c) if c.passed => {}
            Some(c) => return Err(format!("{}: check `{}` failed ({:?} vs {})", m.scenario, c.name, c.value, c.bound)),
            None => return Err(format!("{}: no check `{c}`", m.scenario)),
        }
    }
    Ok(())
}

fn pot() -> Arc<dyn Potential> {
    potential_by_name("default").unwrap()
}

fn exact_layer(x: f64) -> f64 {
    0.5 + (x / PI).atan() / PI
}

fn c1(dir: &Path) -> Outcome {
    let (m, secs) = run("scenario = \"layer\"", dir)?;
    passed(&m, &["exact_layer", "gamma", "eta"])?;
    let (g, e) = (metric(&m, "gamma")?, metric(&m, "eta")?);
    let sup = metric(&m, "exact_sup_error")?;
    ensure(secs <= 120.0, format!("sup error {sup:.2e}, γ/2π² = {:.5}, 2π²η = {:.5}, {secs:.1} s", g / GAMMA, e * GAMMA))
}

fn identity_error(grid: Grid) -> f64 {
    let w = pot();
    let p = Profile::from_fn(grid, Some(TailModel::new(0.0, 1.0, 1.0, 1.0, -1.0)), exact_layer).unwrap();
    let lap = frac_lap_apply(&p, 0.5).unwrap();
    grid.nodes()
        .iter()
        .zip(&lap.values)
        .filter(|(x, _)| x.abs() <= 20.0)
        .map(|(x, v)| (v - w.dw(exact_layer(*x))).abs())
        .fold(0.0, f64::max)
}

fn c2() -> Outcome {
    let coarse = identity_error(Grid::default_unscaled());
    let fine = identity_error(Grid::default_unscaled().refined(2));
    let ratio = coarse / fine;
    ensure(coarse <= 2e-3 && (1.6..=2.4).contains(&ratio), format!("error {coarse:.2e}, refinement ratio {ratio:.3}"))
}

fn c3() -> Outcome {
    let r = run_particles(&ParticleConfig::new(vec![0.0, 1.0], 0.5, GAMMA), 1.0, &[]).map_err(|e| e.to_string())?;
    let tc = r.report.t_c.ok_or("no collision")?;
    let e = rel(tc, 1.0 / (8.0 * PI * PI));
    let line = r
        .trajectory
        .times
        .iter()
        .zip(&r.trajectory.upsilons)
        .map(|(t, u)| (u[0] - (1.0 - 4.0 * GAMMA * t)).abs())
        .fold(0.0, f64::max);
    ensure(e <= 1e-4 && line <= 1e-8, format!("T_c relative error {e:.1e}, υ line residual {line:.1e}"))
}

fn c4() -> Outcome {
    let tri = run_particles(&ParticleConfig::new(vec![0.0, 1.0, 2.0], 0.5, GAMMA), 1.0, &[]).map_err(|e| e.to_string())?;
    let e = rel(tri.report.t_c.ok_or("no collision")?, 1.0 / (2.0 * PI * PI));
    let mut ok = tri.report.kind == CollisionKind::Triple && e <= 1e-4;
    for (x, pair) in [(vec![0.0, 1.0, 2.001], (1, 2)), (vec![0.0, 1.001, 2.001], (2, 3))] {
        let r = run_particles(&ParticleConfig::new(x, 0.5, GAMMA), 1.0, &[]).map_err(|e| e.to_string())?;
        ok &= r.report.kind == CollisionKind::Simple && r.report.pairs == vec![pair];
    }
    ensure(ok, format!("triple T_c relative error {e:.1e}; perturbed gaps give the smaller-gap pair"))
}

fn c5() -> Outcome {
    let base = ParticleConfig::new(vec![0.0, 1.0], 0.5, GAMMA);
    let tc = run_particles(&base, 1.0, &[]).map_err(|e| e.to_string())?.report.t_c.ok_or("no collision")?;
    let deltas = [0.1, 0.05, 0.025, 0.0125];
    let entries = collision_time_convergence(&base.with_delta(0.0, DeltaMode::Widen), &deltas, 1.0).map_err(|e| e.to_string())?;
    let mut pts: Vec<(f64, f64)> = entries.iter().map(|e| (e.delta, e.t_c)).collect();
    pts.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut ok = pts.len() == 4;
    let mut ratios = Vec::new();
    for w in pts.windows(2) {
        let r = (w[0].1 - tc) / (w[1].1 - tc);
        ok &= w[1].1 < w[0].1 && (1.6..=2.4).contains(&r);
        ratios.push(format!("{r:.3}"));
    }
    ensure(ok, format!("ratios {}", ratios.join(", ")))
}

fn c6() -> Outcome {
    let (k1, k2) = (choose_k(0.5).map_err(|e| e.to_string())?, choose_k(0.25).map_err(|e| e.to_string())?);
    let (k, m) = choose_constants(0.5, 0.0, 0.01, 0.05).map_err(|e| e.to_string())?;
    ensure(k1 == 47 && k2 == 48 && k == 47 && m == 130, format!("K = {k1} (s = 1/2), {k2} (s = 1/4), M = {m}"))
}

const EPS: f64 = 0.05;

fn evo_grid() -> Grid {
    Grid::with_max_spacing(2.0, EPS / 4.0).unwrap()
}

fn single(layer: &LayerSolution, g: Grid, a: f64) -> Profile {
    let values: Vec<f64> = g.nodes().iter().map(|x| layer.u_at((x - a) / EPS)).collect();
    let tail = TailModel::matched_two_term(&g, &values, 0.0, 1.0, 1.0);
    Profile::new(g, values, Some(tail)).unwrap()
}

fn evolve_to(v0: &Profile, t_end: f64, dt_scale: f64) -> Result<pnlab_core::evolution::EvolutionResult, String> {
    let mut cfg = EvolutionConfig::new(EPS, 0.5, pot(), v0.grid, t_end);
    cfg.dt_scale = dt_scale;
    evolve(v0, &cfg).map_err(|e| e.to_string())
}

fn sup_diff(a: &Profile, b: &Profile) -> f64 {
    a.values.iter().zip(&b.values).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn c7(layer: &LayerSolution) -> Outcome {
    let v0 = single(layer, evo_grid(), 0.1);
    let a = evolve_to(&v0, 1.0, 1.0)?;
    let b = evolve_to(&v0, 1.0, 0.5)?;
    let drift = a.snapshots.iter().map(|p| sup_diff(p, &v0)).fold(0.0, f64::max);
    let d = (a.last().sup_norm() - b.last().sup_norm()).abs();
    ensure(drift <= 1e-3 && d <= 1e-4, format!("drift {drift:.1e}, dt-halving change {d:.1e}"))
}

fn c8(layer: &LayerSolution) -> Outcome {
    let g = evo_grid();
    let two = |x: [f64; 2]| build_initial(DatumKind::Two, EPS, &x, layer, &ZeroStress, &g).map_err(|e| e.to_string());
    let pairs = [
        (two([-0.5, 0.5])?, two([-0.6, 0.6])?),
        (single(layer, g, 0.1), single(layer, g, -0.1)),
        (Profile::constant(g, 0.05), Profile::constant(g, 0.1)),
    ];
    let mut worst = f64::NEG_INFINITY;
    for (v0, w0) in &pairs {
        let (v, w) = (evolve_to(v0, 0.05, 1.0)?, evolve_to(w0, 0.05, 1.0)?);
        for (p, q) in v.snapshots.iter().zip(&w.snapshots) {
            worst = p.values.iter().zip(&q.values).map(|(a, b)| a - b).fold(worst, f64::max);
        }
    }
    ensure(worst <= 1e-6, format!("largest violation {worst:.1e} over three pairs"))
}

fn c9(dir: &Path) -> Outcome {
    let (m, secs) = run("scenario = \"decay_two\"\nepsilon = 0.02\npositions = [-0.5, 0.5]", dir)?;
    passed(&m, &["crossing_drop"])?;
    let d = metric(&m, "drop_vs_ode")?;
    ensure(d.abs() <= 0.1 && secs <= 600.0, format!("drop time {:.5} vs 1/(8π²), {:+.1}%, {secs:.0} s", metric(&m, "drop_time")?, 100.0 * d))
}

fn c10(dir: &Path) -> Outcome {
    let (m05, _) = run("scenario = \"decay_two\"\nepsilon = 0.05", &dir.join("eps05"))?;
    let (m10, _) = run("scenario = \"decay_two\"\nepsilon = 0.1", &dir.join("eps10"))?;
    passed(&m05, &["rate", "fit_quality"])?;
    let (ratio, r2) = (metric(&m05, "rate_ratio")?, metric(&m05, "r_squared")?);
    let scaling = metric(&m10, "rate")? / metric(&m05, "rate")?;
    let scaling_err = rel(scaling, 0.25);

    // scalar control: constant datum, linear rate β/ε^{2s+1}
    let g = Grid::with_max_spacing(1.0, EPS / 4.0).unwrap();
    let unit = EPS.powi(2);
    let mut cfg = EvolutionConfig::new(EPS, 0.5, pot(), g, 10.0 * unit);
    cfg.stepper = stepper_by_name("exp_euler").map_err(|e| e.to_string())?;
    cfg.series_dt = unit / 10.0;
    let res = evolve(&Profile::constant(g, 0.05), &cfg).map_err(|e| e.to_string())?;
    let control = fit_decay(&res, 0.0).map_err(|e| e.to_string())?.ratio;
    ensure(
        ratio >= 0.5 && r2 >= 0.99 && (control - 1.0).abs() <= 0.02 && scaling_err <= 0.25,
        format!("rate ratio {ratio:.4} (R² {r2:.5}), control {control:.4}, ε-doubling factor {scaling:.4} vs 0.25"),
    )
}

fn c11(dir: &Path) -> Outcome {
    let mut parts = Vec::new();
    for kind in ["two_upper", "three_upper"] {
        let positions = if kind == "two_upper" { "[-2.0, 2.0]" } else { "[-2.0, 2.0, 82.0]" };
        let mut deficits = Vec::new();
        for eps in [0.1, 0.05] {
            let text = format!(
                "scenario = \"barrier-check\"\nbarrier = \"{kind}\"\nepsilon = {eps}\npositions = {positions}\ntheta_scale = 5.0\nt_max = 5.0"
            );
            let (m, _) = run(&text, &dir.join(format!("{kind}_{eps}")))?;
            passed(&m, &["residual_nonnegative"])?;
            let (delta, min) = (metric(&m, "delta")?, metric(&m, "min_residual")?);
            deficits.push(metric(&m, "min_residual_delta0")?.abs());
            parts.push(format!("{kind} ε = {eps}: δ {delta:.4}, min {min:.4}"));
        }
        if deficits[1] >= deficits[0] {
            return Err(format!("{kind}: δ = 0 deficit {:.4} -> {:.4} does not decrease", deficits[0], deficits[1]));
        }
        parts.push(format!("{kind} δ = 0 deficit {:.4} -> {:.4}", deficits[0], deficits[1]));
    }
    Ok(parts.join("; "))
}

fn c12(dir: &Path) -> Outcome {
    let (two, _) = run("scenario = \"barrier_two\"\nepsilon = 0.05", &dir.join("two"))?;
    let (three, _) = run("scenario = \"barrier_three\"\nepsilon = 0.05", &dir.join("three"))?;
    passed(&two, &["initial_ordering", "hat_ordering"])?;
    passed(&three, &["initial_ordering", "hat_ordering", "lower_initial_ordering"])?;
    ensure(
        two.status == Status::Pass && three.status == Status::Pass,
        format!(
            "two: initial {:.1e}, hat {:.1e}; three: initial {:.1e}, hat {:.1e}, lower {:.1e}",
            metric(&two, "initial_ordering_worst")?,
            metric(&two, "hat_ordering_worst")?,
            metric(&three, "initial_ordering_worst")?,
            metric(&three, "hat_ordering_worst")?,
            metric(&three, "lower_initial_ordering_worst")?,
        ),
    )
}

fn c13(dir: &Path) -> Outcome {
    let (m, secs) = run("scenario = \"heteroclinic\"\nepsilon = 0.05", dir)?;
    passed(&m, &["final_distance", "distance_decreasing", "x_fit_in_window"])?;
    ensure(
        secs <= 900.0,
        format!("final distance {:.2e}, x_fit {:.4}, {secs:.0} s", metric(&m, "layer_distance")?, metric(&m, "x_fit")?),
    )
}

fn c14() -> Outcome {
    let w = pot();
    let exact = |tau: f64, xi: f64| ((PI * xi).tan() * (-tau).exp()).atan() / PI;
    let (mut err, mut ok) = (0.0f64, true);
    for xi in [0.01, 0.05, 0.1, 0.2] {
        for k in 0..=50 {
            let tau = 0.1 * k as f64;
            let h = h_flow(xi, tau, w.as_ref()).map_err(|e| e.to_string())?;
            err = err.max((h - exact(tau, xi)).abs());
            ok &= h > 0.0 && h <= xi * (-0.5 * tau).exp() + 1e-15;
        }
    }
    ensure(ok && err <= 1e-6, format!("closed-form error {err:.1e}, envelope holds: {ok}"))
}

fn main() {
    let tmp = tempfile::tempdir().expect("temp dir");
    let dir = |n: usize| tmp.path().join(format!("c{n:02}"));
    let layer = compute_layer(0.5, pot().as_ref(), &Grid::default_unscaled()).expect("layer");
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome + '_>)> = vec![
        ("layer oracle", Box::new(|| c1(&dir(1)))),
        ("fractional Laplacian identity", Box::new(c2)),
        ("two-particle collision", Box::new(c3)),
        ("triple-collision criterion", Box::new(c4)),
        ("δ-limit of collision times", Box::new(c5)),
        ("hat constants", Box::new(c6)),
        ("stationarity of the rescaled layer", Box::new(|| c7(&layer))),
        ("discrete comparison principle", Box::new(|| c8(&layer))),
        ("PDE/ODE collision time", Box::new(|| c9(&dir(9)))),
        ("post-collision relaxation", Box::new(|| c10(&dir(10)))),
        ("barrier supersolutions", Box::new(|| c11(&dir(11)))),
        ("barrier orderings", Box::new(|| c12(&dir(12)))),
        ("heteroclinic relaxation", Box::new(|| c13(&dir(13)))),
        ("h-flow bounds", Box::new(c14)),
    ];
    let mut failed = Vec::new();
    for (i, (name, f)) in criteria.iter().enumerate() {
        let n = i + 1;
        let t0 = Instant::now();
        let out = f();
        let secs = t0.elapsed().as_secs_f64();
        match out {
            Ok(d) => println!("PASS criterion {n}: {name}: {d} [{secs:.1} s]"),
            Err(d) => {
                println!("FAIL criterion {n}: {name}: {d} [{secs:.1} s]");
                failed.push(n);
            }
        }
    }
    if !failed.is_empty() {
        eprintln!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
