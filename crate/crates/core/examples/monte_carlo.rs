//! Round-by-round simulation against the analytic expected counts, for both
//! sampling models, followed by the finite-key evaluation of the tallies.
//!
//! ```text
//! cargo run --release --example monte_carlo [rounds] [distance_km]
//! ```

use std::time::Instant;

use tfqkd::channel::{expected_counts, ChannelPoint};
use tfqkd::finite_key::evaluate_counts;
use tfqkd::montecarlo::{simulate, SamplingModel};
use tfqkd::photon::{decoy_coefficients, DEFAULT_REL_TOL};
use tfqkd::{ExperimentConfig, ProtocolParams, Variant};

fn main() -> tfqkd::Result<()> {
    let mut args = std::env::args().skip(1);
    let rounds: u64 = args
        .next()
        .and_then(|a| a.parse::<f64>().ok())
        .map_or(20_000_000, |r| r as u64);
    let distance: f64 = args.next().and_then(|a| a.parse().ok()).unwrap_or(100.0);

    let params = ProtocolParams {
        mu: 0.04,
        mu1: 0.18,
        mu2: 0.03,
        p0: 0.6,
        p10: 0.2,
        p11: 0.12,
        p2: 0.08,
        delta_over_pi: 0.1,
    };
    let config = ExperimentConfig::reference(rounds as f64, Variant::TwoPhase);
    let point = ChannelPoint::new(distance, &config, params.delta());
    let expect = expected_counts(&params, &config, &point);
    let coefficients = decoy_coefficients(&params, config.variant, DEFAULT_REL_TOL)?;

    println!("{rounds} rounds at {distance} km");
    println!(
        "{:<16} {:>12} {:>12} {:>12} {:>12} {:>9}",
        "", "K0", "K1", "K2", "err0", "e_bit"
    );
    let row = |label: &str, c: &tfqkd::ObservedCounts| {
        println!(
            "{label:<16} {:>12.1} {:>12.1} {:>12.1} {:>12.1} {:>9.5}",
            c.k0,
            c.k1,
            c.k2,
            c.err0,
            c.bit_error_rate()
        );
    };
    row("expected", &expect);

    for model in [SamplingModel::PaperFaithful, SamplingModel::Physical] {
        let t = Instant::now();
        let tally = simulate(&params, &config, &point, rounds, 1, model)?;
        let took = t.elapsed();
        row(&format!("{model:?}"), &tally.counts);
        let slice = tally.raw.slice_mu1 as f64 / tally.raw.sent_mu1 as f64;
        let key = evaluate_counts(&params, &config, point, tally.counts, coefficients.clone()).result;
        println!(
            "{:<16} slice acceptance {slice:.5} (Δ/π = {}), G = {} ({took:.1?})",
            "", params.delta_over_pi, key.g_bits
        );
    }
    Ok(())
}
