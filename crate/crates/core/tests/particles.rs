use std::f64::consts::PI;
use std::sync::Arc;

use approx::assert_relative_eq;

use pnlab_core::particles::{
    choose_constants, choose_k, classify_collision, collision_time_convergence, run_particles, CollisionKind, DeltaMode,
    ParticleConfig,
};
use pnlab_core::potential::ConstantStress;

const GAMMA: f64 = 2.0 * PI * PI;

/// Pair: `d/dt θ^{2s+1} = -(2s+1)γ/s` while nothing else acts.
fn pair_tc(s: f64, gamma: f64, theta: f64) -> f64 {
    s * theta.powf(2.0 * s + 1.0) / ((2.0 * s + 1.0) * gamma)
}

/// Equal gaps stay equal. An outer particle is pulled across `θ` and pushed
/// back across `2θ`: `θ' = -γ/(2s)(1 - 2^{-2s}) θ^{-2s}`.
fn triple_tc(s: f64, gamma: f64, theta: f64) -> f64 {
    let rate = gamma / (2.0 * s) * (1.0 - 2f64.powf(-2.0 * s));
    theta.powf(2.0 * s + 1.0) / ((2.0 * s + 1.0) * rate)
}

#[test]
fn pair_collision_matches_closed_form() {
    for s in [0.25, 0.5, 0.75] {
        let run = run_particles(&ParticleConfig::new(vec![0.0, 1.0], s, GAMMA), 1.0, &[]).unwrap();
        let tc = run.report.t_c.unwrap();
        let exact = pair_tc(s, GAMMA, 1.0);
        assert_relative_eq!(tc, exact, max_relative = 1e-4);
        assert_eq!(run.report.kind, CollisionKind::Simple);
    }
    let run = run_particles(&ParticleConfig::new(vec![0.0, 1.0], 0.5, GAMMA), 1.0, &[]).unwrap();
    assert!((run.report.t_c.unwrap() * 8.0 * PI * PI - 1.0).abs() <= 1e-4);
}

#[test]
fn upsilon_is_linear_for_a_pair() {
    let run = run_particles(&ParticleConfig::new(vec![0.0, 1.0], 0.5, GAMMA), 1.0, &[]).unwrap();
    let tr = &run.trajectory;
    let slope = -2.0 * GAMMA * 2.0;
    let worst = tr
        .times
        .iter()
        .zip(&tr.upsilons)
        .map(|(t, u)| (u[0] - (1.0 + slope * t)).abs())
        .fold(0.0, f64::max);
    assert!(worst <= 1e-8, "{worst}");
}

#[test]
fn equal_gaps_collide_together() {
    let pc = ParticleConfig::new(vec![0.0, 1.0, 2.0], 0.5, GAMMA);
    let run = run_particles(&pc, 1.0, &[]).unwrap();
    assert_eq!(run.report.kind, CollisionKind::Triple);
    let tc = run.report.t_c.unwrap();
    let exact = triple_tc(0.5, GAMMA, 1.0);
    assert_relative_eq!(exact, 1.0 / (2.0 * PI * PI), epsilon = 1e-15);
    assert_relative_eq!(tc, exact, max_relative = 1e-4);
    assert_eq!(classify_collision(&pc).unwrap().0, CollisionKind::Triple);
}

#[test]
fn unequal_gaps_give_a_simple_collision_of_the_closer_pair() {
    for (x, pair) in [(vec![0.0, 1.0, 2.001], (1, 2)), (vec![0.0, 1.001, 2.001], (2, 3))] {
        let pc = ParticleConfig::new(x, 0.5, GAMMA);
        let run = run_particles(&pc, 1.0, &[]).unwrap();
        assert_eq!(run.report.kind, CollisionKind::Simple);
        assert_eq!(run.report.pairs, vec![pair]);
        assert_eq!(classify_collision(&pc).unwrap(), (CollisionKind::Simple, vec![pair]));
    }
}

#[test]
fn perturbed_collision_times_converge_from_above() {
    let base = ParticleConfig::new(vec![0.0, 1.0], 0.5, GAMMA);
    let tc = run_particles(&base, 1.0, &[]).unwrap().report.t_c.unwrap();
    let deltas = [0.1, 0.05, 0.025, 0.0125];
    let entries = collision_time_convergence(&base.clone().with_delta(0.0, DeltaMode::Widen), &deltas, 1.0).unwrap();
    let mut by_delta: Vec<(f64, f64)> = entries.iter().map(|e| (e.delta, e.t_c)).collect();
    by_delta.sort_by(|a, b| b.0.total_cmp(&a.0));
    for w in by_delta.windows(2) {
        assert!(w[1].1 < w[0].1 && w[1].1 > tc);
        let ratio = (w[0].1 - tc) / (w[1].1 - tc);
        assert!((1.6..=2.4).contains(&ratio), "δ = {}: ratio {ratio}", w[1].0);
    }
}

#[test]
fn constant_stress_pair_matches_quadrature() {
    // θ' = -2γ(1/θ - σ) at s = 1/2, so T = ∫_0^1 θ dθ / (2γ(1 - σθ)).
    let sigma: f64 = 0.5;
    let exact = (-1.0 / sigma - (1.0 - sigma).ln() / (sigma * sigma)) / (2.0 * GAMMA);
    let pc = ParticleConfig::new(vec![0.0, 1.0], 0.5, GAMMA).with_stress(Arc::new(ConstantStress { amplitude: sigma }));
    let tc = run_particles(&pc, 1.0, &[]).unwrap().report.t_c.unwrap();
    assert_relative_eq!(tc, exact, max_relative = 1e-4);
    assert!(tc > pair_tc(0.5, GAMMA, 1.0));
}

#[test]
fn hat_constants() {
    assert_eq!(choose_k(0.5).unwrap(), 47);
    assert_eq!(choose_k(0.25).unwrap(), 48);
    assert_eq!(choose_constants(0.5, 0.0, 0.01, 0.05).unwrap(), (47, 130));
    assert_eq!(choose_constants(0.25, 0.0, 0.0, 0.05).unwrap().0, 48);
}

#[test]
fn ordering_is_validated() {
    assert!(ParticleConfig::new(vec![1.0, 0.0], 0.5, GAMMA).validate().is_err());
    assert!(ParticleConfig::new(vec![0.0, 1.0, 2.0, 3.0], 0.5, GAMMA).validate().is_err());
    assert!(ParticleConfig::new(vec![0.0, 1.0], 1.5, GAMMA).validate().is_err());
}
