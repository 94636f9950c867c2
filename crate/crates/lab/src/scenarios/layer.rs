use std::f64::consts::PI;

use pnlab_core::layer::{fit_decay_exponent, fit_tail};
use serde_json::json;

use super::{corrector, is_cosine, layer, potential, rel_err, Scenario};
use crate::{LabError, RunOutput, ScenarioConfig};

/// Arctan layer of the cosine potential at `s = 1/2`.
fn exact_layer(x: f64) -> f64 {
    0.5 + (x / PI).atan() / PI
}

fn cosine_half(cfg: &ScenarioConfig) -> bool {
    is_cosine(cfg) && cfg.s == 0.5
}

pub struct LayerScenario;

impl Scenario for LayerScenario {
    fn name(&self) -> &'static str {
        "layer"
    }

    fn about(&self) -> &'static str {
        "heteroclinic layer and its constants"
    }

    fn run(&self, cfg: &ScenarioConfig, out: &mut RunOutput) -> Result<(), LabError> {
        let l = layer(cfg, out)?;
        let nodes = l.u.grid.nodes();
        let rows = nodes.iter().enumerate().map(|(i, x)| vec![*x, l.u.values[i], l.u_prime.values[i]]);
        out.csv("layer.csv", &["x", "u", "u_prime"], rows.collect::<Vec<_>>())?;
        let tail = fit_tail(&l).ok();
        out.json(
            "constants.json",
            &json!({
                "s": l.s,
                "potential": cfg.potential,
                "beta": l.beta,
                "gamma": l.gamma,
                "eta": l.eta,
                "kappa_fit": l.kappa_fit.is_finite().then_some(l.kappa_fit),
                "tail_leading_coeff": tail.map(|t| t.leading_coeff),
                "residual": l.residual,
                "iterations": l.iterations,
            }),
        )?;
        out.metric("gamma", l.gamma);
        out.metric("eta", l.eta);
        out.metric("residual", l.residual);
        out.check("monotone", l.u.check_monotone_layer().is_ok(), f64::NAN, "u nondecreasing");
        out.check("converged", l.residual <= 1e-6, l.residual, "<= 1e-6");
        if cosine_half(cfg) {
            let sup = nodes
                .iter()
                .zip(&l.u.values)
                .filter(|(x, _)| x.abs() <= 20.0)
                .map(|(x, u)| (u - exact_layer(*x)).abs())
                .fold(0.0, f64::max);
            let g = rel_err(l.gamma, 2.0 * PI * PI);
            let e = rel_err(l.eta, 1.0 / (2.0 * PI * PI));
            out.metric("exact_sup_error", sup);
            out.check("exact_layer", sup <= 1e-3, sup, "<= 1e-3 on |x| <= 20");
            out.check("gamma", g <= 5e-3, g, "relative error <= 0.5%");
            out.check("eta", e <= 5e-3, e, "relative error <= 0.5%");
        }
        Ok(())
    }
}

pub struct CorrectorScenario;

impl Scenario for CorrectorScenario {
    fn name(&self) -> &'static str {
        "corrector"
    }

    fn about(&self) -> &'static str {
        "corrector of the linearised layer equation"
    }

    fn run(&self, cfg: &ScenarioConfig, out: &mut RunOutput) -> Result<(), LabError> {
        let pot = potential(cfg)?;
        let l = layer(cfg, out)?;
        let c = corrector(cfg, out)?;
        let nodes = c.psi.grid.nodes();
        let rows = nodes.iter().zip(&c.psi.values).map(|(x, p)| vec![*x, *p]);
        out.csv("corrector.csv", &["x", "psi"], rows.collect::<Vec<_>>())?;
        let sup = c.psi.sup_norm();
        let hw = c.psi.grid.half_width();
        let decay = if sup > 1e-4 { fit_decay_exponent(&c.psi, 5.0, 0.5 * hw).ok() } else { None };
        out.json(
            "corrector.json",
            &json!({
                "s": cfg.s,
                "potential": pot.name(),
                "sup_psi": sup,
                "normalization": c.normalization,
                "solvability": c.solvability,
                "residual": c.residual,
                "iterations": c.iterations,
                "decay_exponent": decay,
                "eta": l.eta,
            }),
        )?;
        out.metric("sup_psi", sup);
        out.metric("residual", c.residual);
        if let Some(d) = decay {
            out.metric("decay_exponent", d);
        }
        out.check("residual", c.residual <= 1e-6, c.residual, "<= 1e-6");
        out.check("orthogonal", c.normalization.abs() <= 1e-8, c.normalization, "|<psi, u'>| <= 1e-8");
        if cosine_half(cfg) {
            out.check("vanishes", sup <= 1e-4, sup, "sup |psi| <= 1e-4 for the cosine potential at s = 1/2");
        }
        Ok(())
    }
}
