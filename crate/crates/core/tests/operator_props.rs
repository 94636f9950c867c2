use pnlab_core::nonlocal::{FracLap, Grid, Profile, TailModel};
use proptest::prelude::*;

fn bump(g: Grid, amp: f64, centre: f64, width: f64) -> Profile {
    Profile::from_fn(g, Some(TailModel::constant(0.0)), |x| amp * (-((x - centre) / width).powi(2)).exp()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn superposition(s in 0.1f64..0.9, a in -2.0f64..2.0, b in -2.0f64..2.0, c in -3.0f64..3.0, w in 0.5f64..2.0) {
        let g = Grid::new(15.0, 301).unwrap();
        let op = FracLap::new(&g, s).unwrap();
        let p = bump(g, 1.0, 0.0, 1.0);
        let q = bump(g, 1.0, c, w);
        let sum = Profile::from_fn(g, Some(TailModel::constant(0.0)), |x| {
            a * (-(x * x)).exp() + b * (-((x - c) / w).powi(2)).exp()
        })
        .unwrap();
        let (lp, lq, ls) = (op.apply(&p).unwrap(), op.apply(&q).unwrap(), op.apply(&sum).unwrap());
        for i in 0..g.len() {
            prop_assert!((ls.values[i] - a * lp.values[i] - b * lq.values[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn image_is_negative_at_a_positive_peak(s in 0.1f64..0.9, amp in 0.1f64..3.0, w in 0.5f64..3.0) {
        let g = Grid::new(15.0, 301).unwrap();
        let lap = FracLap::new(&g, s).unwrap().apply(&bump(g, amp, 0.0, w)).unwrap();
        prop_assert!(lap.values[g.center()] < 0.0);
    }

    #[test]
    fn shift_by_whole_nodes(s in 0.2f64..0.8, k in 1usize..20) {
        let g = Grid::new(15.0, 601).unwrap();
        let op = FracLap::new(&g, s).unwrap();
        let h = g.h();
        let lp = op.apply(&bump(g, 1.0, 0.0, 1.0)).unwrap();
        let lq = op.apply(&bump(g, 1.0, k as f64 * h, 1.0)).unwrap();
        let c = g.center();
        for j in c - 50..c + 50 {
            prop_assert!((lq.values[j + k] - lp.values[j]).abs() < 1e-6);
        }
    }
}
