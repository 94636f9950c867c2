use pnlab_core::evolution::linear_fit;
use pnlab_core::particles::{
    classify_collision, collision_time_convergence, run_particles, CollisionKind, DeltaMode, ParticleConfig, ParticleRun,
};
use serde_json::json;
use toml::Value;

use super::{floats, gamma, rel_err, stress, table, Scenario};
use crate::{LabError, RunOutput, ScenarioConfig};

fn particle_config(cfg: &ScenarioConfig, out: &mut RunOutput) -> Result<ParticleConfig, LabError> {
    let g = gamma(cfg, out)?;
    let mode = DeltaMode::from_name(&cfg.delta_mode)?;
    let pc = ParticleConfig::new(cfg.positions.clone(), cfg.s, g).with_stress(stress(cfg)?).with_delta(cfg.delta, mode);
    pc.validate()?;
    Ok(pc)
}

/// Unperturbed, unstressed system.
fn is_plain(pc: &ParticleConfig) -> bool {
    pc.delta == 0.0 && pc.stress.is_zero()
}

/// Closed-form collision time of a plain pair or an equally spaced plain triple.
fn closed_form_tc(pc: &ParticleConfig) -> Option<f64> {
    if !is_plain(pc) {
        return None;
    }
    let (s, g) = (pc.s, pc.gamma);
    let x = &pc.positions;
    let th = x[1] - x[0];
    match x.len() {
        2 => Some(s * th.powf(2.0 * s + 1.0) / (g * (2.0 * s + 1.0))),
        3 if (x[2] - x[1] - th).abs() <= 1e-12 * th => {
            Some(2.0 * s * th.powf(2.0 * s + 1.0) / ((2.0 * s + 1.0) * g * (1.0 - 2f64.powf(-2.0 * s))))
        }
        _ => None,
    }
}

fn write_run(cfg: &ScenarioConfig, out: &mut RunOutput, run: &ParticleRun) -> Result<(), LabError> {
    let n = run.cfg.n();
    let mut header: Vec<String> = vec!["t".into()];
    header.extend((1..=n).map(|i| format!("x{i}")));
    header.extend((1..=n).map(|i| format!("v{i}")));
    header.extend((1..n).map(|i| format!("gap{i}")));
    header.extend((1..n).map(|i| format!("upsilon{i}")));
    let q = 2.0 * cfg.s + 1.0;
    let mut rows = Vec::with_capacity(cfg.samples);
    for k in 0..cfg.samples {
        let t = run.t_end * k as f64 / cfg.samples as f64;
        let st = run.state_at(t)?;
        let mut r = vec![t];
        r.extend(&st.positions);
        r.extend(&st.velocities);
        r.extend(&st.gaps);
        r.extend(st.gaps.iter().map(|g| g.powf(q)));
        rows.push(r);
    }
    let h: Vec<&str> = header.iter().map(String::as_str).collect();
    out.csv("trajectory.csv", &h, rows)?;
    let rep = &run.report;
    let mut events = vec![json!({ "event": "start", "t": 0.0, "positions": run.cfg.initial_positions() })];
    if let Some(ts) = rep.t_stop {
        events.push(json!({ "event": "stop_gap", "t": ts, "gap": rep.stop_gap }));
    }
    match rep.t_c {
        Some(tc) => events.push(json!({ "event": "collision", "t": tc, "kind": rep.kind, "pairs": rep.pairs, "x": rep.x_c })),
        None => events.push(json!({ "event": "horizon", "t": run.t_end })),
    }
    out.jsonl("events.jsonl", events)?;
    out.json(
        "collision.json",
        &json!({
            "t_c": rep.t_c,
            "kind": rep.kind,
            "pairs": rep.pairs,
            "x_c": rep.x_c,
            "t_end": run.t_end,
            "gamma": run.cfg.gamma,
            "s": run.cfg.s,
            "delta": run.cfg.delta,
            "delta_mode": run.cfg.mode,
            "closed_form_t_c": closed_form_tc(&run.cfg),
        }),
    )?;
    if let Some(tc) = rep.t_c {
        out.metric("t_c", tc);
    }
    Ok(())
}

/// Largest deviation of the first `υ` from its least-squares line.
fn upsilon_line_residual(run: &ParticleRun) -> f64 {
    let pts: Vec<(f64, f64)> = run.trajectory.times.iter().zip(&run.trajectory.upsilons).map(|(t, u)| (*t, u[0])).collect();
    let (slope, _) = linear_fit(pts.iter().copied());
    let n = pts.len() as f64;
    let (mt, mu) = pts.iter().fold((0.0, 0.0), |a, (t, u)| (a.0 + t / n, a.1 + u / n));
    pts.iter().map(|(t, u)| (u - (mu + slope * (t - mt))).abs()).fold(0.0, f64::max)
}

/// Runs the configured system and the common checks.
fn collide(cfg: &ScenarioConfig, out: &mut RunOutput) -> Result<(ParticleConfig, ParticleRun), LabError> {
    let pc = particle_config(cfg, out)?;
    let run = out.time("particles", |_| run_particles(&pc, cfg.t_max, &[]))?;
    write_run(cfg, out, &run)?;
    let tc = run.report.t_c.unwrap_or(f64::NAN);
    out.check("collided", run.report.t_c.is_some(), tc, format!("collision before t = {}", cfg.t_max));
    if let Some(exact) = closed_form_tc(&pc) {
        let e = rel_err(tc, exact);
        out.metric("t_c_closed_form", exact);
        out.check("t_c_closed_form", e <= 1e-4, e, "relative error <= 1e-4");
    }
    Ok((pc, run))
}

pub struct TwoCollide;

impl Scenario for TwoCollide {
    fn name(&self) -> &'static str {
        "two_collide"
    }

    fn about(&self) -> &'static str {
        "two-particle collision and the small-δ limit of collision times"
    }

    fn defaults(&self) -> toml::Table {
        table([
            ("positions", floats(&[0.0, 1.0])),
            ("deltas", floats(&[0.1, 0.05, 0.025, 0.0125])),
            ("delta_mode", Value::String("widen".into())),
            ("t_max", Value::Float(1.0)),
        ])
    }

    fn run(&self, cfg: &ScenarioConfig, out: &mut RunOutput) -> Result<(), LabError> {
        if cfg.positions.len() != 2 {
            return Err(LabError::Config("two_collide needs two positions".into()));
        }
        let (pc, run) = collide(cfg, out)?;
        if is_plain(&pc) {
            let r = upsilon_line_residual(&run);
            out.metric("upsilon_line_residual", r);
            out.check("upsilon_linear", r <= 1e-8, r, "<= 1e-8");
        }
        if cfg.deltas.is_empty() {
            return Ok(());
        }
        let base = pc.clone().with_delta(0.0, DeltaMode::None);
        let entries = out.time("delta_limit", |_| collision_time_convergence(&base, &cfg.deltas, cfg.t_max))?;
        let tc = run_particles(&base, cfg.t_max, &[])?.report.t_c.unwrap_or(f64::NAN);
        let mut sorted = entries.clone();
        sorted.sort_by(|a, b| b.delta.total_cmp(&a.delta));
        out.csv(
            "delta_limit.csv",
            &["delta", "t_c", "t_c_minus_base", "max_position_dev"],
            sorted.iter().map(|e| vec![e.delta, e.t_c, e.t_c - tc, e.max_position_dev]).collect::<Vec<_>>(),
        )?;
        let above = sorted.iter().all(|e| e.t_c > tc);
        let decreasing = sorted.windows(2).all(|w| w[1].t_c < w[0].t_c);
        out.check("delta_monotone", above && decreasing, f64::NAN, "T_c^δ decreasing with δ towards T_c");
        for w in sorted.windows(2) {
            if (w[0].delta / w[1].delta - 2.0).abs() > 1e-9 {
                continue;
            }
            let ratio = (w[0].t_c - tc) / (w[1].t_c - tc);
            out.metric(&format!("halving_ratio_{}", w[1].delta), ratio);
            out.check(&format!("halving_ratio_{}", w[1].delta), (1.6..=2.4).contains(&ratio), ratio, "in [1.6, 2.4]");
        }
        Ok(())
    }
}

fn three_checks(cfg: &ScenarioConfig, out: &mut RunOutput, want: CollisionKind) -> Result<(), LabError> {
    if cfg.positions.len() != 3 {
        return Err(LabError::Config(format!("{} needs three positions", cfg.scenario)));
    }
    let (pc, run) = collide(cfg, out)?;
    let rep = &run.report;
    out.check("kind", rep.kind == want, f64::NAN, format!("{want:?} collision"));
    if is_plain(&pc) {
        let (kind, pairs) = classify_collision(&pc)?;
        let agree = kind == rep.kind && pairs == rep.pairs;
        out.check("classification", agree, f64::NAN, "spacing rule agrees with the integrated system");
        if want == CollisionKind::Simple {
            let x = &pc.positions;
            let smaller = if x[1] - x[0] < x[2] - x[1] { (1, 2) } else { (2, 3) };
            out.check("smaller_gap_pair", rep.pairs == vec![smaller], f64::NAN, "the smaller initial gap closes");
        }
    }
    Ok(())
}

pub struct ThreeSimple;

impl Scenario for ThreeSimple {
    fn name(&self) -> &'static str {
        "three_simple"
    }

    fn about(&self) -> &'static str {
        "three particles with unequal gaps: a simple collision"
    }

    fn defaults(&self) -> toml::Table {
        table([("positions", floats(&[0.0, 1.0, 2.001])), ("t_max", Value::Float(1.0))])
    }

    fn run(&self, cfg: &ScenarioConfig, out: &mut RunOutput) -> Result<(), LabError> {
        three_checks(cfg, out, CollisionKind::Simple)
    }
}

pub struct ThreeTriple;

impl Scenario for ThreeTriple {
    fn name(&self) -> &'static str {
        "three_triple"
    }

    fn about(&self) -> &'static str {
        "three particles with equal gaps: a triple collision"
    }

    fn defaults(&self) -> toml::Table {
        table([("positions", floats(&[0.0, 1.0, 2.0])), ("t_max", Value::Float(1.0))])
    }

    fn run(&self, cfg: &ScenarioConfig, out: &mut RunOutput) -> Result<(), LabError> {
        three_checks(cfg, out, CollisionKind::Triple)
    }
}

pub struct Particles;

impl Scenario for Particles {
    fn name(&self) -> &'static str {
        "particles"
    }

    fn about(&self) -> &'static str {
        "integrate a particle system as configured"
    }

    fn run(&self, cfg: &ScenarioConfig, out: &mut RunOutput) -> Result<(), LabError> {
        let pc = particle_config(cfg, out)?;
        let run = out.time("particles", |_| run_particles(&pc, cfg.t_max, &[]))?;
        write_run(cfg, out, &run)
    }
}
