use std::sync::Arc;

use pnlab_core::barriers::{
    assemble_barrier, calibrate_delta, calibrate_hat_delta, check_ordering, BarrierKind, BarrierTemplate, LayerField,
    ResidualReport, ResidualSampling,
};
use pnlab_core::evolution::{build_initial, DatumKind};
use pnlab_core::nonlocal::Grid;
use pnlab_core::particles::{choose_k, hat_initial, HatSide};
use pnlab_core::potential::Potential;
use serde_json::json;
use toml::Value;

use super::{floats, gamma, layer, layer_field, potential, stress, table, Scenario};
use crate::{LabError, RunOutput, ScenarioConfig};

/// Rows kept in a residual field dump.
const FIELD_ROWS: usize = 50_000;

fn template(cfg: &ScenarioConfig, out: &mut RunOutput, kind: BarrierKind, positions: Vec<f64>) -> Result<BarrierTemplate, LabError> {
    Ok(BarrierTemplate {
        kind,
        positions,
        gamma: gamma(cfg, out)?,
        stress: stress(cfg)?,
        epsilon: cfg.epsilon,
        theta: cfg.theta(),
        t_max: cfg.t_max,
        sampling: ResidualSampling {
            times: cfg.residual_times,
            margin: cfg.residual_margin,
            per_eps: cfg.residual_per_eps,
            keep_field: true,
        },
    })
}

/// `δ`, the residual at `δ` and the minimum at `δ = 0`.
fn residual_at_delta(
    cfg: &ScenarioConfig,
    out: &mut RunOutput,
    tpl: &BarrierTemplate,
    field: &Arc<LayerField>,
    pot: &dyn Potential,
) -> Result<(f64, ResidualReport, f64), LabError> {
    if cfg.calibrate {
        let cal = out.time(&format!("calibrate_{}", tpl.kind.name()), |_| calibrate_delta(tpl, field.clone(), pot))?;
        out.metric(&format!("{}_amplifications", tpl.kind.name()), cal.amplifications as f64);
        Ok((cal.delta, cal.report, cal.min_at_zero))
    } else {
        let rep = out.time(&format!("residual_{}", tpl.kind.name()), |_| tpl.residual(cfg.delta, field.clone(), pot))?;
        let min0 = if cfg.delta == 0.0 { rep.min } else { tpl.residual(0.0, field.clone(), pot)?.min };
        Ok((cfg.delta, rep, min0))
    }
}

/// `residual_<tag>.json` without the field, and a strided CSV dump of it.
fn write_residual(out: &mut RunOutput, tag: &str, rep: &ResidualReport) -> Result<(), LabError> {
    let total = rep.times.len() * rep.x.len();
    let stride = total.div_ceil(FIELD_ROWS).max(1);
    let mut rows = Vec::new();
    for (t, row) in rep.times.iter().zip(&rep.field) {
        for (j, (x, r)) in rep.x.iter().zip(row).enumerate() {
            if j % stride == 0 {
                rows.push(vec![*t, *x, *r]);
            }
        }
    }
    out.csv(&format!("residual_{tag}.csv"), &["t", "x", "residual"], rows)?;
    let mut summary = rep.clone();
    summary.field.clear();
    out.json(&format!("residual_{tag}.json"), &summary)
}

fn ordering_grid(cfg: &ScenarioConfig, extent: f64) -> Result<Grid, LabError> {
    let l = 100f64.max(1.25 * extent);
    Ok(Grid::with_max_spacing(l, cfg.epsilon / 4.0)?)
}

/// Upper barrier, its hat and the orderings between them and the datum.
fn upper_pipeline(cfg: &ScenarioConfig, out: &mut RunOutput, upper: BarrierKind, hat: BarrierKind, datum: DatumKind) -> Result<(), LabError> {
    let pot = potential(cfg)?;
    let field = layer_field(cfg, out)?;
    let layer = layer(cfg, out)?;
    let theta = cfg.theta();
    out.metric("theta", theta);
    let tpl = template(cfg, out, upper, cfg.positions.clone())?;
    let (delta, rep, min0) = residual_at_delta(cfg, out, &tpl, &field, pot.as_ref())?;
    write_residual(out, upper.name(), &rep)?;
    out.metric("delta", delta);
    out.metric("min_residual", rep.min);
    out.metric("min_residual_delta0", min0);
    out.check("delta_range", (0.0..=1.0).contains(&delta), delta, "0 <= δ <= 1");
    out.check("residual_nonnegative", rep.holds(), rep.min, "min I_ε >= 0");

    let run = tpl.run(cfg.s, delta)?;
    let Some(t1) = run.report.t_stop else {
        out.check("gap_reaches_theta", false, f64::NAN, format!("gap θ_ε reached before t = {}", cfg.t_max));
        return Ok(());
    };
    out.check("gap_reaches_theta", true, t1, format!("gap θ_ε reached before t = {}", cfg.t_max));
    out.metric("t1", t1);
    let spec = tpl.spec(delta, field.clone())?;
    let bar_end = run.state_at(t1)?.positions;
    let k = match cfg.hat_k {
        Some(k) => k,
        None => choose_k(cfg.s)? as f64,
    };
    let hat_pos = hat_initial(&bar_end, theta, k, HatSide::Left);
    let extent = cfg.positions.iter().chain(&hat_pos).map(|x| x.abs()).fold(0.0, f64::max);
    let grid = ordering_grid(cfg, extent)?;
    let st = stress(cfg)?;
    let v0 = build_initial(datum, cfg.epsilon, &cfg.positions, &layer, st.as_ref(), &grid)?;
    let b0 = assemble_barrier(&spec, 0.0, &grid)?;
    let init = check_ordering(&v0, &b0)?;
    out.metric("initial_ordering_worst", init.worst);
    out.check("initial_ordering", init.holds, init.worst, "datum <= barrier at t = 0");

    let bt = assemble_barrier(&spec, t1, &grid)?;
    let htpl = BarrierTemplate { kind: hat, positions: hat_pos.clone(), t_max: cfg.t_max.min(1.0), ..tpl.clone() };
    let hat_result = out.time("hat", |_| calibrate_hat_delta(&htpl, delta, field.clone(), &bt, 1e-3));
    let hat_json = match &hat_result {
        Ok((dh, _, ord)) => {
            out.metric("hat_delta", *dh);
            out.metric("hat_ordering_worst", ord.worst);
            out.check("hat_ordering", ord.holds, ord.worst, "hat barrier at 0 >= barrier at T1");
            json!({ "delta_hat": dh, "ordering": ord })
        }
        Err(e) => {
            out.check("hat_ordering", false, f64::NAN, format!("hat barrier at 0 >= barrier at T1 ({e})"));
            json!({ "error": e.to_string() })
        }
    };
    out.json(
        "orderings.json",
        &json!({
            "grid": { "half_width": grid.half_width(), "points": grid.len() },
            "k": k,
            "t1": t1,
            "bar_positions_t1": bar_end,
            "hat_positions": hat_pos,
            "initial": init,
            "hat": hat_json,
        }),
    )?;
    Ok(())
}

pub struct BarrierTwo;

impl Scenario for BarrierTwo {
    fn name(&self) -> &'static str {
        "barrier_two"
    }

    fn about(&self) -> &'static str {
        "two-layer upper barrier: calibrated δ, residual and orderings"
    }

    fn defaults(&self) -> toml::Table {
        table([("positions", floats(&[-2.0, 2.0])), ("theta_scale", Value::Float(5.0)), ("t_max", Value::Float(5.0))])
    }

    fn run(&self, cfg: &ScenarioConfig, out: &mut RunOutput) -> Result<(), LabError> {
        if cfg.positions.len() != 2 {
            return Err(LabError::Config("barrier_two needs two positions".into()));
        }
        upper_pipeline(cfg, out, BarrierKind::TwoUpper, BarrierKind::TwoHat, DatumKind::Two)
    }
}

pub struct BarrierThree;

impl Scenario for BarrierThree {
    fn name(&self) -> &'static str {
        "barrier_three"
    }

    fn about(&self) -> &'static str {
        "three-layer upper and lower barriers: calibrated δ, residuals and orderings"
    }

    fn defaults(&self) -> toml::Table {
        table([("positions", floats(&[-2.0, 2.0, 82.0])), ("theta_scale", Value::Float(5.0)), ("t_max", Value::Float(5.0))])
    }

    fn run(&self, cfg: &ScenarioConfig, out: &mut RunOutput) -> Result<(), LabError> {
        if cfg.positions.len() != 3 {
            return Err(LabError::Config("barrier_three needs three positions".into()));
        }
        upper_pipeline(cfg, out, BarrierKind::ThreeUpper, BarrierKind::ThreeHat, DatumKind::Three)?;
        let pot = potential(cfg)?;
        let field = layer_field(cfg, out)?;
        let layer = layer(cfg, out)?;
        let tpl = template(cfg, out, BarrierKind::ThreeLower, cfg.positions.clone())?;
        let (delta, rep, min0) = residual_at_delta(cfg, out, &tpl, &field, pot.as_ref())?;
        write_residual(out, "three_lower", &rep)?;
        out.metric("lower_delta", delta);
        out.metric("lower_min_residual", rep.min);
        out.metric("lower_min_residual_delta0", min0);
        out.check("lower_residual_nonnegative", rep.holds(), rep.min, "min (−I_ε) >= 0");
        let spec = tpl.spec(delta, field)?;
        let extent = cfg.positions.iter().map(|x| x.abs()).fold(0.0, f64::max);
        let grid = ordering_grid(cfg, extent)?;
        let st = stress(cfg)?;
        let v0 = build_initial(DatumKind::Three, cfg.epsilon, &cfg.positions, &layer, st.as_ref(), &grid)?;
        let b0 = assemble_barrier(&spec, 0.0, &grid)?;
        let ord = check_ordering(&b0, &v0)?;
        out.metric("lower_initial_ordering_worst", ord.worst);
        out.check("lower_initial_ordering", ord.holds, ord.worst, "lower barrier <= datum at t = 0");
        Ok(())
    }
}

pub struct BarrierCheck;

impl Scenario for BarrierCheck {
    fn name(&self) -> &'static str {
        "barrier-check"
    }

    fn about(&self) -> &'static str {
        "residual of one barrier variant, optionally with calibrated δ"
    }

    fn defaults(&self) -> toml::Table {
        table([("positions", floats(&[-2.0, 2.0])), ("theta_scale", Value::Float(5.0)), ("t_max", Value::Float(5.0))])
    }

    fn run(&self, cfg: &ScenarioConfig, out: &mut RunOutput) -> Result<(), LabError> {
        let kind = BarrierKind::from_name(&cfg.barrier)?;
        let pot = potential(cfg)?;
        let field = layer_field(cfg, out)?;
        let tpl = template(cfg, out, kind, cfg.positions.clone())?;
        let (delta, rep, min0) = residual_at_delta(cfg, out, &tpl, &field, pot.as_ref())?;
        write_residual(out, kind.name(), &rep)?;
        out.metric("delta", delta);
        out.metric("min_residual", rep.min);
        out.metric("min_residual_delta0", min0);
        out.check("residual_nonnegative", rep.holds(), rep.min, "min of the signed residual >= 0");
        Ok(())
    }
}
