use std::f64::consts::PI;

use pnlab_core::nonlocal::{
    frac_lap_apply, integrate_line, interp_at, scheme_by_name, FracLap, Grid, LineMode, Profile, TailModel,
};
use pnlab_core::potential::potential_by_name;

fn exact_layer(x: f64) -> f64 {
    0.5 + (x / PI).atan() / PI
}

fn exact_layer_prime(x: f64) -> f64 {
    1.0 / (PI * PI * (1.0 + (x / PI).powi(2)))
}

/// Exact layer with its own far field `1/|x|` (left) and `1 - 1/x` (right).
fn exact_profile(grid: Grid) -> Profile {
    let tail = TailModel::new(0.0, 1.0, 1.0, 1.0, -1.0);
    Profile::from_fn(grid, Some(tail), exact_layer).unwrap()
}

fn identity_error(grid: Grid) -> f64 {
    let w = potential_by_name("default").unwrap();
    let p = exact_profile(grid);
    let lap = frac_lap_apply(&p, 0.5).unwrap();
    grid.nodes()
        .iter()
        .zip(&lap.values)
        .filter(|(x, _)| x.abs() <= 20.0)
        .map(|(x, v)| (v - w.dw(exact_layer(*x))).abs())
        .fold(0.0, f64::max)
}

#[test]
fn arctan_layer_solves_the_half_order_equation() {
    let coarse = identity_error(Grid::default_unscaled());
    assert!(coarse <= 2e-3, "sup error {coarse}");
    let fine = identity_error(Grid::default_unscaled().refined(2));
    let ratio = coarse / fine;
    assert!(ratio >= 1.6, "refinement ratio {ratio} ({coarse} -> {fine})");
}

#[test]
fn operator_is_linear() {
    let g = Grid::new(20.0, 801).unwrap();
    let op = FracLap::new(&g, 0.3).unwrap();
    let a = Profile::from_fn(g, Some(TailModel::new(0.0, 0.0, 0.6, 0.0, 0.0)), |x| (-x * x).exp()).unwrap();
    let b = Profile::from_fn(g, Some(TailModel::constant(0.0)), |x| x * (-0.5 * x * x).exp()).unwrap();
    let (al, be) = (1.7, -0.4);
    let tail = TailModel::constant(0.0);
    let c = Profile::from_fn(g, Some(tail), |x| al * (-x * x).exp() + be * x * (-0.5 * x * x).exp()).unwrap();
    let (la, lb, lc) = (op.apply(&a).unwrap(), op.apply(&b).unwrap(), op.apply(&c).unwrap());
    for i in 0..g.len() {
        let d = lc.values[i] - (al * la.values[i] + be * lb.values[i]);
        assert!(d.abs() < 1e-10, "node {i}: {d}");
    }
}

#[test]
fn integer_shift_commutes_with_the_operator() {
    let g = Grid::new(30.0, 1201).unwrap();
    let op = FracLap::new(&g, 0.5).unwrap();
    let h = g.h();
    let bump = |x: f64| (-(x * x)).exp();
    let p = Profile::from_fn(g, Some(TailModel::constant(0.0)), bump).unwrap();
    let q = Profile::from_fn(g, Some(TailModel::constant(0.0)), |x| bump(x - 8.0 * h)).unwrap();
    let (lp, lq) = (op.apply(&p).unwrap(), op.apply(&q).unwrap());
    let c = g.center();
    for j in c - 100..c + 100 {
        assert!((lq.values[j + 8] - lp.values[j]).abs() < 1e-6, "node {j}");
    }
}

#[test]
fn strict_maximum_has_negative_image() {
    let g = Grid::new(10.0, 401).unwrap();
    for s in [0.2, 0.5, 0.8] {
        let values = g.nodes().iter().map(|x| 0.1 + 1.0 / (1.0 + x * x)).collect();
        let p = Profile::with_matched_tail(g, values, 0.1, 0.1, 2.0).unwrap();
        let lap = frac_lap_apply(&p, s).unwrap();
        assert!(lap.values[g.center()] < 0.0, "s = {s}");
    }
}

#[test]
fn constant_profile_is_annihilated() {
    let g = Grid::new(5.0, 101).unwrap();
    let lap = frac_lap_apply(&Profile::constant(g, 0.7), 0.4).unwrap();
    assert!(lap.sup_norm() < 1e-12);
}

#[test]
fn order_outside_the_unit_interval_is_rejected() {
    let g = Grid::new(5.0, 101).unwrap();
    assert!(frac_lap_apply(&Profile::constant(g, 0.0), 1.0).is_err());
    assert!(frac_lap_apply(&Profile::constant(g, 0.0), 0.0).is_err());
}

#[test]
fn line_integrals_of_known_profiles() {
    let g = Grid::default_unscaled();
    // u*'(x) = 1/(π² + x²) ~ 1/x² far out.
    let tail = TailModel::new(0.0, 0.0, 2.0, 1.0, 1.0);
    let d = Profile::from_fn(g, Some(tail), exact_layer_prime).unwrap();
    let raw = integrate_line(&d, LineMode::Raw).unwrap();
    let sq = integrate_line(&d, LineMode::Squared).unwrap();
    assert!((raw - 1.0).abs() < 1e-4, "{raw}");
    assert!((sq - 1.0 / (2.0 * PI * PI)).abs() < 1e-6, "{sq}");

    let gauss = Profile::from_fn(Grid::new(10.0, 2001).unwrap(), Some(TailModel::constant(0.0)), |x| (-x * x).exp()).unwrap();
    let v = integrate_line(&gauss, LineMode::Raw).unwrap();
    assert!((v - PI.sqrt()).abs() < 1e-10, "{v}");
}

#[test]
fn interpolation_uses_nodes_and_tail() {
    let g = Grid::default_unscaled();
    let p = exact_profile(g);
    assert_eq!(interp_at(&p, 0.0), 0.5);
    let far = interp_at(&p, 70.0);
    assert!((far - (1.0 - 1.0 / 70.0)).abs() < 1e-12);
    for x in [-13.37, 0.011, 4.5] {
        assert!((interp_at(&p, x) - exact_layer(x)).abs() < 1e-7, "x = {x}");
    }
}

/// Adaptive Simpson on `[a, b]`.
fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
            return left + right + (left + right - whole) / 15.0;
        }
        rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) + rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
    }
    let (fa, fm, fb) = (f(a), f(0.5 * (a + b)), f(b));
    rec(f, a, b, fa, fm, fb, (b - a) / 6.0 * (fa + 4.0 * fm + fb), tol, 50)
}

#[test]
fn extrapolated_scheme_on_a_gaussian() {
    // I e^{-x^2}(0) = -2 ∫_0^∞ (1 - e^{-y^2}) / y^2 dy = -2√π at s = 1/2
    let kernel = |y: f64| if y < 1e-4 { 1.0 - y * y / 2.0 } else { (1.0 - (-y * y).exp()) / (y * y) };
    let quad = simpson(&kernel, 0.0, 40.0, 1e-13) + 1.0 / 40.0;
    let oracle = -2.0 * quad;
    assert!((oracle + 2.0 * PI.sqrt()).abs() < 1e-9, "{oracle}");

    let g = Grid::new(10.0, 1001).unwrap();
    let p = Profile::from_fn(g, Some(TailModel::constant(0.0)), |x| (-x * x).exp()).unwrap();
    let v = scheme_by_name("richardson").unwrap().apply(&p, 0.5).unwrap().values[g.center()];
    assert!((v / oracle - 1.0).abs() <= 1e-6, "{v} vs {oracle}");
    let plain = scheme_by_name("product_hat").unwrap().apply(&p, 0.5).unwrap().values[g.center()];
    assert!((plain / oracle - 1.0).abs() > (v / oracle - 1.0).abs());
}
