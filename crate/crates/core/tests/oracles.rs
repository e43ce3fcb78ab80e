//! Frozen high-precision reference values (see `tests/data/gen_oracles.py`).

mod common;

use common::{integrate, lambda_cases, pipeline_case, rel};
use tfqkd::channel::{e_mis, ChannelPoint};
use tfqkd::finite_key::evaluate;
use tfqkd::photon::{lambda_four_phase, lambda_two_phase, DEFAULT_REL_TOL};
use tfqkd::{ExperimentConfig, Variant};

#[test]
fn lambda_matches_high_precision_sums() {
    let cases = lambda_cases();
    assert_eq!(cases.len(), 50);
    for c in &cases {
        let two = lambda_two_phase(&c.params, DEFAULT_REL_TOL).unwrap();
        let four = lambda_four_phase(&c.params, DEFAULT_REL_TOL).unwrap();
        assert!(rel(two.lambda, c.lambda_two_phase) < 1e-9, "{c:?} got {}", two.lambda);
        assert!(
            rel(four.lambda, c.lambda_four_phase) < 1e-9,
            "{c:?} got {}",
            four.lambda
        );
        // the truncated series never overshoots
        assert!(two.lambda <= c.lambda_two_phase * (1.0 + 1e-12));
    }
}

#[test]
fn pipeline_matches_reference_values() {
    let c = pipeline_case();
    for (variant, want) in [(Variant::TwoPhase, &c.two_phase), (Variant::FourPhase, &c.four_phase)] {
        let config = ExperimentConfig::reference(c.n_tot, variant);
        let eval = evaluate(&c.params, &config, c.distance_km).unwrap();
        let checks = [
            ("k0", eval.counts.k0, want.k0),
            ("k1", eval.counts.k1, want.k1),
            ("k2", eval.counts.k2, want.k2),
            ("e_bit", eval.result.e_bit, want.e_bit),
            ("f", eval.result.f_value, want.f),
            ("e_ph", eval.result.e_ph_upper, want.e_ph),
            ("g", eval.result.g_unclamped, want.g),
            ("lambda", eval.coefficients.lambda, want.lambda_),
            ("gamma", eval.coefficients.gamma, want.gamma),
        ];
        for (name, got, expect) in checks {
            assert!(rel(got, expect) < 1e-9, "{variant:?} {name}: {got} vs {expect}");
        }
        assert!(eval.result.feasible);
        assert_eq!(eval.result.g_bits, want.g.floor() as u64);
    }
}

#[test]
fn e_mis_matches_quadrature() {
    for delta in [1e-3, 0.05, std::f64::consts::PI / 8.0, 0.7, 1.5, std::f64::consts::PI] {
        let avg = integrate(&|x: f64| (0.5 * x).sin().powi(2), -0.5 * delta, 0.5 * delta, 1e-16) / delta;
        assert!(
            (e_mis(delta) - avg).abs() < 1e-12,
            "Δ={delta}: {} vs {avg}",
            e_mis(delta)
        );
    }
}

#[test]
fn channel_point_reference_numbers() {
    let config = ExperimentConfig::reference(1e13, Variant::TwoPhase);
    let pt = ChannelPoint::new(100.0, &config, std::f64::consts::PI / 8.0);
    assert!(rel(pt.eta, 0.03) < 1e-14);
    assert!((pt.e_mis - 0.003_206_574_4).abs() < 1e-9);
}
