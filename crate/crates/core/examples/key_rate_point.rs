//! Analytic key rate of one fixed parameter tuple, with the intermediate
//! quantities of the finite-key bound.
//!
//! ```text
//! cargo run --example key_rate_point [distance_km] [log10 N]
//! ```

use std::time::Instant;

use tfqkd::finite_key::evaluate;
use tfqkd::{ExperimentConfig, ProtocolParams, Variant};

fn main() -> tfqkd::Result<()> {
    let mut args = std::env::args().skip(1);
    let distance: f64 = args.next().and_then(|a| a.parse().ok()).unwrap_or(100.0);
    let exponent: i32 = args.next().and_then(|a| a.parse().ok()).unwrap_or(13);

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
    println!("{params:?}");
    println!("validity: {}", params.validate()?);

    for variant in [Variant::TwoPhase, Variant::FourPhase] {
        let config = ExperimentConfig::reference(10f64.powi(exponent), variant);
        let eval = evaluate(&params, &config, distance)?;
        let r = &eval.result;
        println!("\n{variant:?} at {distance} km, N = 1e{exponent}");
        println!("  eta = {:.4e}, e_m = {:.4e}", eval.channel.eta, eval.channel.e_m);
        println!(
            "  K0 = {:.4e}, K1 = {:.4e}, K2 = {:.4e}, e_bit = {:.4}",
            eval.counts.k0, eval.counts.k1, eval.counts.k2, r.e_bit
        );
        println!(
            "  Gamma = {:.6e}, Lambda = {:.6e} (tail {:.1e}, {} terms)",
            eval.coefficients.gamma, eval.coefficients.lambda, eval.coefficients.tail_bound, eval.coefficients.s_max
        );
        println!("  f = {:.6e}, e_ph <= {:.5}", r.f_value, r.e_ph_upper);
        println!(
            "  G = {} bits, rate = {:.4e} per pulse, feasible = {}",
            r.g_bits, r.rate_per_pulse, r.feasible
        );
        println!("  eps_sec = {:.3e}", r.eps.eps_sec);

        let reps = 100_000;
        let t = Instant::now();
        for _ in 0..reps {
            std::hint::black_box(evaluate(std::hint::black_box(&params), &config, distance)?);
        }
        println!("  {:.2?} per evaluation", t.elapsed() / reps);
    }
    Ok(())
}
