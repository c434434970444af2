use std::f64::consts::PI;

use chvlab::engine::library::anti_correlated_coin;
use chvlab::engine::{run_trials, simulate_table, ThresholdDensity, ThresholdDetectionModel};
use chvlab::model::{Outcome, Setting};
use chvlab::stats::{post_selected_correlation, tabulate};

fn s(label: &str, theta: f64) -> Setting {
    Setting::new(label, theta, 0.0).unwrap()
}

#[test]
fn anti_correlated_coin_counts() {
    let m = anti_correlated_coin();
    let trials = run_trials(&m, &s("a", 0.0), &s("b", 0.0), 1_000_000, 12).unwrap();
    let tables = tabulate(&trials);
    let t = tables.values().next().unwrap();
    let tol = 3.0 * 250_000f64.sqrt();
    for (a, b) in [(Outcome::Plus, Outcome::Minus), (Outcome::Minus, Outcome::Plus)] {
        assert!((t.count(a, b) as f64 - 500_000.0).abs() <= tol);
    }
    assert_eq!(t.count(Outcome::Plus, Outcome::Plus) + t.count(Outcome::Minus, Outcome::Minus), 0);
}

#[test]
fn table_and_trial_stream_agree() {
    let m = ThresholdDetectionModel::new(ThresholdDensity::uniform(8), 0.2, 0.9).unwrap();
    let (a, b) = (s("a", 0.4), s("b", 1.9));
    let table = simulate_table(&m, &a, &b, 50_000, 4).unwrap();
    let from_trials = tabulate(&run_trials(&m, &a, &b, 50_000, 4).unwrap());
    assert_eq!(from_trials.values().next().unwrap(), &table);
}

/// Monte Carlo agrees with the quadrature path cell by cell, with noise and
/// reduced visibility switched on.
#[test]
fn threshold_monte_carlo_matches_quadrature() {
    let m = ThresholdDetectionModel::new(
        ThresholdDensity::PiecewiseConstant { weights: vec![4.0, 1.0, 0.5, 2.0, 1.0, 0.0, 1.0, 3.0] },
        0.35,
        0.85,
    )
    .unwrap();
    let n = 1_000_000u64;
    for (i, d) in [0.0, 0.6, PI / 2.0, 2.7].into_iter().enumerate() {
        let (a, b) = (s("a", d), s("b", 0.0));
        let joint = m.quadrature_joint(&a, &b).unwrap();
        let table = simulate_table(&m, &a, &b, n, 100 + i as u64).unwrap();
        for oa in Outcome::ALL {
            for ob in Outcome::ALL {
                let p = joint.get(oa, ob);
                let sd = (n as f64 * p * (1.0 - p)).sqrt().max(1.0);
                let dev = (table.count(oa, ob) as f64 - n as f64 * p).abs();
                assert!(dev <= 4.0 * sd, "Δ={d} ({oa:?},{ob:?}): {dev} vs σ {sd}");
            }
        }
        let est = post_selected_correlation(&table).unwrap();
        let exact = joint.post_selected_expectation().unwrap();
        assert!((est.e_hat - exact).abs() <= 4.0 * est.std_err);
    }
}

#[test]
fn threshold_click_marginals_are_balanced() {
    let m = ThresholdDetectionModel::singlet_reference();
    let n = 500_000u64;
    for (i, d) in [0.0, 1.0, 2.0].into_iter().enumerate() {
        let t = simulate_table(&m, &s("a", d), &s("b", 0.3), n, i as u64).unwrap();
        let stations = [
            (t.marginal_a(Outcome::Plus), t.marginal_a(Outcome::Minus)),
            (t.marginal_b(Outcome::Plus), t.marginal_b(Outcome::Minus)),
        ];
        for (plus, minus) in stations {
            let clicks = (plus + minus) as f64;
            let z = (plus as f64 / clicks - 0.5).abs() / (0.25 / clicks).sqrt();
            assert!(z <= 3.0, "Δ={d}: z = {z}");
        }
    }
}
