//! Γ and Λ for both phase variants as the code intensity approaches the
//! strong decoy, where the Λ series converges slowly.
//!
//! ```text
//! cargo run --release --example lambda_series
//! ```

use tfqkd::photon::{gamma, lambda_four_phase, lambda_two_phase, q_s, DEFAULT_REL_TOL};
use tfqkd::ProtocolParams;

fn main() -> tfqkd::Result<()> {
    let base = ProtocolParams {
        mu: 0.04,
        mu1: 0.4,
        mu2: 0.03,
        p0: 0.6,
        p10: 0.2,
        p11: 0.12,
        p2: 0.08,
        delta_over_pi: 0.1,
    };
    println!("Γ = {:.6e}", gamma(&base)?);
    print!("q_s, s = 0..8:");
    for s in 0..=8 {
        print!(" {:.3e}", q_s(s, &base)?);
    }
    println!("\n");

    println!(
        "{:>6}  {:>13} {:>6}  {:>13} {:>6}  {:>10}",
        "μ/μ1", "Λ two-phase", "terms", "Λ four-phase", "terms", "T"
    );
    for ratio in [0.05, 0.1, 0.2, 0.4, 0.6, 0.8, 0.9, 0.95] {
        let p = ProtocolParams {
            mu: ratio * base.mu1,
            ..base
        };
        let two = lambda_two_phase(&p, DEFAULT_REL_TOL)?;
        let four = lambda_four_phase(&p, DEFAULT_REL_TOL)?;
        println!(
            "{ratio:>6.2}  {:>13.6e} {:>6}  {:>13.6e} {:>6}  {:>10.3e}",
            two.lambda, two.s_max, four.lambda, four.s_max, two.t_residual
        );
    }
    Ok(())
}
