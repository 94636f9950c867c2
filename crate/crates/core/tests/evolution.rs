use std::f64::consts::PI;
use std::sync::{Arc, OnceLock};

use pnlab_core::evolution::{
    best_translate, build_initial, crossings, evolve, fit_decay, stepper_by_name, track_levels, value_at, DatumKind,
    EvolutionConfig, EvolutionResult,
};
use pnlab_core::layer::{compute_layer, LayerSolution};
use pnlab_core::nonlocal::{Grid, Profile, TailModel};
use pnlab_core::potential::{potential_by_name, Potential, ZeroStress};

const EPS: f64 = 0.05;

fn layer() -> &'static LayerSolution {
    static L: OnceLock<LayerSolution> = OnceLock::new();
    L.get_or_init(|| compute_layer(0.5, potential_by_name("default").unwrap().as_ref(), &Grid::default_unscaled()).unwrap())
}

fn pot() -> Arc<dyn Potential> {
    potential_by_name("default").unwrap()
}

fn grid(half_width: f64) -> Grid {
    Grid::with_max_spacing(half_width, EPS / 4.0).unwrap()
}

fn single_layer(g: Grid, a: f64) -> Profile {
    let values: Vec<f64> = g.nodes().iter().map(|x| layer().u_at((x - a) / EPS)).collect();
    let tail = TailModel::matched_two_term(&g, &values, 0.0, 1.0, 1.0);
    Profile::new(g, values, Some(tail)).unwrap()
}

fn exact(x: f64) -> f64 {
    0.5 + (x / PI).atan() / PI
}

/// Superposition of exact layers, alternating in orientation, minus one.
fn exact_datum(positions: &[f64], x: f64) -> f64 {
    let mut v = -1.0;
    for (i, xi) in positions.iter().enumerate() {
        let z = if i % 2 == 0 { 1.0 } else { -1.0 };
        v += exact(z * (x - xi) / EPS);
    }
    v
}

/// 1/2-crossing of the exact datum in `[a, b]` by bisection.
fn exact_crossing(positions: &[f64], mut a: f64, mut b: f64) -> f64 {
    let f = |x: f64| exact_datum(positions, x) - 0.5;
    assert!(f(a) * f(b) < 0.0);
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if f(a) * f(m) <= 0.0 {
            b = m;
        } else {
            a = m;
        }
    }
    0.5 * (a + b)
}

fn run(v0: &Profile, t_end: f64, dt_scale: f64) -> EvolutionResult {
    let mut cfg = EvolutionConfig::new(EPS, 0.5, pot(), v0.grid, t_end);
    cfg.dt_scale = dt_scale;
    evolve(v0, &cfg).unwrap()
}

fn sup_diff(a: &Profile, b: &Profile) -> f64 {
    a.values.iter().zip(&b.values).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn two_layer_datum_values() {
    let g = grid(2.0);
    let v0 = build_initial(DatumKind::Two, EPS, &[-0.5, 0.5], layer(), &ZeroStress, &g).unwrap();
    // 2u(10) - 1 and u(0) + u(20) - 1 for the arctan layer
    assert!((exact_datum(&[-0.5, 0.5], 0.0) - 0.806216).abs() < 1e-6);
    assert!((exact_datum(&[-0.5, 0.5], -0.5) - 0.450405).abs() < 1e-6);
    assert!((value_at(&v0, 0.0) - 0.806216).abs() < 1e-3);
    assert!((value_at(&v0, -0.5) - 0.450405).abs() < 1e-3);
    assert!(value_at(&v0, 50.0).abs() < 1e-3 && value_at(&v0, -50.0).abs() < 1e-3);
    let c = crossings(&v0, 0.5);
    assert_eq!(c.len(), 2);
}

#[test]
fn coarse_grid_is_rejected() {
    let g = Grid::with_max_spacing(2.0, EPS).unwrap();
    assert!(build_initial(DatumKind::Two, EPS, &[-0.5, 0.5], layer(), &ZeroStress, &g).is_err());
    let g = grid(2.0);
    assert!(build_initial(DatumKind::Two, EPS, &[0.5, -0.5], layer(), &ZeroStress, &g).is_err());
}

#[test]
fn three_layer_crossings_alternate() {
    let g = grid(2.0);
    let v0 = build_initial(DatumKind::Three, EPS, &[-0.5, 0.0, 0.5], layer(), &ZeroStress, &g).unwrap();
    let c = crossings(&v0, 0.5);
    let signs: Vec<i8> = c.iter().map(|p| p.1).collect();
    assert_eq!(signs, vec![1, -1, 1]);
    // The far tails of the neighbours move each crossing off its centre.
    let x = [-0.5, 0.0, 0.5];
    let want = [exact_crossing(&x, -0.7, -0.25), exact_crossing(&x, -0.25, 0.25), exact_crossing(&x, 0.25, 0.7)];
    for ((got, _), want) in c.iter().zip(want) {
        assert!((got - want).abs() <= g.h(), "{got} vs {want}");
    }
}

#[test]
fn zero_stays_zero() {
    let g = grid(1.0);
    let res = run(&Profile::constant(g, 0.0), 0.01, 1.0);
    assert!(res.last().sup_norm() == 0.0);
}

#[test]
fn rescaled_layer_is_stationary() {
    let v0 = single_layer(grid(2.0), 0.1);
    let a = run(&v0, 1.0, 1.0);
    let drift = a.snapshots.iter().map(|p| sup_diff(p, &v0)).fold(0.0, f64::max);
    assert!(drift <= 1e-3, "drift {drift}");
    let b = run(&v0, 1.0, 0.5);
    let d = (a.last().sup_norm() - b.last().sup_norm()).abs();
    assert!(d <= 1e-4, "sup changed by {d}");
    let d = sup_diff(a.last(), b.last());
    assert!(d <= 1e-4, "profiles differ by {d}");
    let (x, dist) = best_translate(a.last(), layer(), EPS).unwrap();
    assert!((x - 0.1).abs() <= a.last().grid.h(), "{x}");
    assert!(dist <= 1e-3, "{dist}");
}

#[test]
fn ordered_data_stay_ordered() {
    let g = grid(2.0);
    let two = |x: [f64; 2]| build_initial(DatumKind::Two, EPS, &x, layer(), &ZeroStress, &g).unwrap();
    let pairs = [
        (two([-0.5, 0.5]), two([-0.6, 0.6])),
        (single_layer(g, 0.1), single_layer(g, -0.1)),
        (Profile::constant(g, 0.05), Profile::constant(g, 0.1)),
    ];
    for (k, (v0, w0)) in pairs.iter().enumerate() {
        assert!(v0.values.iter().zip(&w0.values).all(|(a, b)| a <= b), "pair {k} not ordered initially");
        let (v, w) = (run(v0, 0.05, 1.0), run(w0, 0.05, 1.0));
        for (p, q) in v.snapshots.iter().zip(&w.snapshots) {
            let worst = p.values.iter().zip(&q.values).map(|(a, b)| a - b).fold(f64::NEG_INFINITY, f64::max);
            assert!(worst <= 1e-6, "pair {k}: violation {worst}");
        }
    }
}

/// `h' = -W'(h)/ε^{2s+1}` from `h = 0.05`: the log-slope tends to `β/ε^{2s+1}`.
#[test]
fn constant_datum_decays_at_the_linear_rate() {
    let g = grid(1.0);
    let unit = EPS.powf(2.0);
    let mut cfg = EvolutionConfig::new(EPS, 0.5, pot(), g, 10.0 * unit);
    cfg.stepper = stepper_by_name("exp_euler").unwrap();
    cfg.series_dt = unit / 10.0;
    let res = evolve(&Profile::constant(g, 0.05), &cfg).unwrap();
    let fit = fit_decay(&res, 0.0).unwrap();
    assert!((fit.ratio - 1.0).abs() <= 0.02, "{fit:?}");
    assert!(fit.r_squared >= 0.99);
    // closed form at the horizon
    let h = (((0.05 * PI).tan() * (-10f64).exp()).atan()) / PI;
    let got = res.last().values[0];
    assert!((got / h - 1.0).abs() < 1e-2, "{got} vs {h}");
}

#[test]
fn level_tracks_start_at_the_datum_positions() {
    let g = grid(2.0);
    let v0 = build_initial(DatumKind::Two, EPS, &[-0.5, 0.5], layer(), &ZeroStress, &g).unwrap();
    let res = run(&v0, 0.02, 1.0);
    let track = track_levels(&res, 0.5);
    let first = &track.entries[0].crossings;
    assert_eq!(first.len(), 2);
    let want = exact_crossing(&[-0.5, 0.5], -0.7, 0.0);
    assert!((first[0].0 - want).abs() <= g.h() && (first[1].0 + want).abs() <= g.h(), "{first:?}");
    assert!(first[0].1 == 1 && first[1].1 == -1);
    // the layers approach each other
    let last = &track.entries.last().unwrap().crossings;
    assert!(last.is_empty() || last[1].0 - last[0].0 < 1.0);
}
