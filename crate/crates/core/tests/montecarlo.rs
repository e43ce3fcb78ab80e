mod common;

use common::pipeline_case;
use tfqkd::channel::{code_rates, decoy_rate, ChannelPoint};
use tfqkd::montecarlo::{simulate, simulate_code_rounds, SamplingModel};
use tfqkd::{ExperimentConfig, ObservedCounts, ProtocolParams, Variant};

/// |observed − n p| in units of the binomial standard deviation.
fn z_score(observed: u64, n: u64, p: f64) -> f64 {
    let n = n as f64;
    (observed as f64 - n * p) / (n * p * (1.0 - p)).sqrt()
}

fn setup(variant: Variant) -> (ProtocolParams, ExperimentConfig, ChannelPoint) {
    let case = pipeline_case();
    let config = ExperimentConfig::reference(1e13, variant);
    let point = ChannelPoint::new(case.distance_km, &config, case.params.delta());
    (case.params, config, point)
}

#[test]
fn paper_faithful_counts_match_expectations() {
    for variant in [Variant::TwoPhase, Variant::FourPhase] {
        let (p, config, point) = setup(variant);
        let n = 8_000_000;
        let t = simulate(&p, &config, &point, n, 17, SamplingModel::PaperFaithful).unwrap();
        let code = code_rates(point.eta, p.mu, point.e_m, config.p_d);
        let sift = if variant == Variant::FourPhase { 0.5 } else { 1.0 };
        let dp = p.delta_over_pi;
        let checks = [
            ("k0", t.raw.k0, sift * p.p0 * p.p0 * code.q_mu),
            ("err0", t.raw.err0, sift * p.p0 * p.p0 * code.q_err),
            ("k10", t.raw.k10, p.p10 * p.p10 * decoy_rate(point.eta, 0.0, config.p_d)),
            (
                "k11",
                t.raw.k11,
                p.p11 * p.p11 * dp * decoy_rate(point.eta, p.mu1, config.p_d),
            ),
            (
                "k2",
                t.raw.k2,
                p.p2 * p.p2 * dp * decoy_rate(point.eta, p.mu2, config.p_d),
            ),
        ];
        for (name, got, prob) in checks {
            let z = z_score(got, n, prob);
            assert!(
                z.abs() < 5.0,
                "{variant:?} {name}: {got} vs {} (z = {z:.2})",
                prob * n as f64
            );
        }
        assert_eq!(t.counts.k1, (t.raw.k10 + t.raw.k11) as f64);
        let e_bit = t.counts.bit_error_rate();
        let sd = (code.e_bit * (1.0 - code.e_bit) / t.counts.k0).sqrt();
        assert!((e_bit - code.e_bit).abs() < 5.0 * sd);
    }
}

#[test]
fn postselection_accepts_delta_over_pi() {
    let (p, config, point) = setup(Variant::TwoPhase);
    let t = simulate(&p, &config, &point, 4_000_000, 3, SamplingModel::Physical).unwrap();
    for (kept, sent) in [(t.raw.slice_mu1, t.raw.sent_mu1), (t.raw.slice_mu2, t.raw.sent_mu2)] {
        assert!(sent > 10_000);
        assert!(z_score(kept, sent, p.delta_over_pi).abs() < 5.0, "{kept}/{sent}");
    }
}

#[test]
fn physical_code_rounds_match_analytic_rates() {
    let (p, config, point) = setup(Variant::TwoPhase);
    let n = 2_000_000;
    let t = simulate_code_rounds(&p, &config, &point, n, 23, SamplingModel::Physical).unwrap();
    let code = code_rates(point.eta, p.mu, point.e_m, config.p_d);
    assert!(
        z_score(t.correct, n, code.q_corr).abs() < 5.0,
        "{} vs {}",
        t.correct,
        code.q_corr * n as f64
    );
    assert!(
        z_score(t.error, n, code.q_err).abs() < 5.0,
        "{} vs {}",
        t.error,
        code.q_err * n as f64
    );
}

#[test]
fn same_seed_same_tally() {
    let (p, config, point) = setup(Variant::FourPhase);
    let a = simulate(&p, &config, &point, 1_500_000, 99, SamplingModel::Physical).unwrap();
    let b = simulate(&p, &config, &point, 1_500_000, 99, SamplingModel::Physical).unwrap();
    assert_eq!(a, b);
}

#[test]
fn simulated_counts_give_key_length_inside_statistical_band() {
    // Short-distance tuple that is feasible with only 10^7 rounds.
    let (p0, p10, p11) = (0.594, 0.3112, 0.0243);
    let params = ProtocolParams {
        mu: 0.0144,
        mu1: 0.589,
        mu2: 0.0483,
        p0,
        p10,
        p11,
        p2: 1.0 - p0 - p10 - p11,
        delta_over_pi: 0.114,
    };
    let n = 10_000_000u64;
    let config = ExperimentConfig::reference(n as f64, Variant::TwoPhase);
    let analytic = tfqkd::finite_key::evaluate(&params, &config, 0.0).unwrap();
    assert!(analytic.result.feasible);

    let point = analytic.channel;
    let t = simulate(&params, &config, &point, n, 41, SamplingModel::PaperFaithful).unwrap();
    let g_of = |c: ObservedCounts| {
        tfqkd::finite_key::evaluate_counts(&params, &config, point, c, analytic.coefficients.clone())
            .result
            .g_unclamped
    };
    let mc = g_of(t.counts);

    let e = analytic.counts;
    let sd = |k: f64| 5.0 * k.sqrt();
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for corner in 0..32u32 {
        let s = |bit: u32| if corner >> bit & 1 == 1 { 1.0 } else { -1.0 };
        let c = ObservedCounts::new(
            e.k0 + s(0) * sd(e.k0),
            e.k10 + s(1) * sd(e.k10),
            e.k11 + s(2) * sd(e.k11),
            e.k2 + s(3) * sd(e.k2),
            e.err0 + s(4) * sd(e.err0),
        );
        let g = g_of(c);
        lo = lo.min(g);
        hi = hi.max(g);
    }
    assert!(
        lo <= mc && mc <= hi,
        "MC G = {mc}, band [{lo}, {hi}], analytic {}",
        analytic.result.g_unclamped
    );
}
