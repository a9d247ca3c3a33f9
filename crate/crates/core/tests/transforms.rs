use std::time::Instant;

use haarbcr::dyadic::{eval_phi, eval_psi, haar_analysis, haar_synthesis};
use haarbcr::{GridFunction, GridSpec};
use proptest::prelude::*;

fn grid_and_values() -> impl Strategy<Value = (GridSpec, Vec<f64>)> {
    (1usize..5, 0u32..7).prop_flat_map(|(m, j)| {
        let g = GridSpec::new(m, j).unwrap();
        (Just(g), prop::collection::vec(-10.0f64..10.0, g.n()))
    })
}

proptest! {
    #[test]
    fn round_trip_and_parseval((g, values) in grid_and_values()) {
        let f = GridFunction::new(g, values).unwrap();
        let c = haar_analysis(&f);
        let back = haar_synthesis(&c).unwrap();
        let scale = f.values.iter().fold(1.0f64, |a, v| a.max(v.abs()));
        for (a, b) in back.values.iter().zip(&f.values) {
            prop_assert!((a - b).abs() <= 1e-12 * scale);
        }
        let e = f.norm().powi(2);
        prop_assert!((c.energy() - e).abs() <= 1e-12 * e.max(1.0));
    }

    #[test]
    fn linearity((g, values) in grid_and_values(), t in -3.0f64..3.0) {
        let f = GridFunction::new(g, values.clone()).unwrap();
        let tf = GridFunction::new(g, values.iter().map(|v| v * t).collect()).unwrap();
        let (a, b) = (haar_analysis(&f), haar_analysis(&tf));
        for (x, y) in a.detail.iter().flatten().zip(b.detail.iter().flatten()) {
            prop_assert!((x * t - y).abs() <= 1e-12 * (1.0 + y.abs()));
        }
    }
}

/// Coefficients against inner products with the analytic Haar functions.
#[test]
fn coefficients_match_sampled_inner_products() {
    let g = GridSpec::new(3, 5).unwrap();
    let f = GridFunction::from_fn(g, |x| (1.3 * x).sin() + x * x / 9.0);
    let c = haar_analysis(&f);
    let h = g.h();
    let bracket = |w: &dyn Fn(f64) -> f64| (0..g.n()).map(|p| w(g.midpoint(p)) * f.values[p]).sum::<f64>() * h;
    for m in 0..g.m {
        let want = bracket(&|x| eval_phi(0, m as i64, x));
        assert!((c.coarse[m] - want).abs() < 1e-13);
    }
    for j in g.levels() {
        for k in 0..g.side(j) {
            let want = bracket(&|x| eval_psi(j, k as i64, x));
            assert!((c.detail[j as usize][k] - want).abs() < 1e-13, "j={j} k={k}");
        }
    }
}

#[test]
fn transforms_scale_linearly() {
    let time = |j: u32| {
        let g = GridSpec::new(1, j).unwrap();
        let f = GridFunction::from_fn(g, |x| x.cos());
        let reps = 20;
        let mut best = f64::INFINITY;
        for _ in 0..3 {
            let start = Instant::now();
            for _ in 0..reps {
                let c = haar_analysis(std::hint::black_box(&f));
                std::hint::black_box(haar_synthesis(&c).unwrap());
            }
            best = best.min(start.elapsed().as_secs_f64() / reps as f64);
        }
        best
    };
    let (a, b) = (time(16), time(19));
    let ratio = (b / a).powf(1.0 / 3.0);
    assert!(ratio < 3.0, "doubling ratio {ratio}");
}
