//! Numerical dominance certificate for one tuple: passes with the series Λ,
//! fails once Λ is inflated, and warns when the photon cutoff is too low.
//!
//! ```text
//! cargo run --release --example verify_dominance
//! ```

use std::time::Instant;

use tfqkd::dominance::{verify_dominance, verify_dominance_with, CertReport, DominanceCheck, DominanceWeights};
use tfqkd::ProtocolParams;

fn show(label: &str, r: &CertReport) {
    println!(
        "{label:<22} pass={:<5} min eig (in/anti) {:+.3e} / {:+.3e}  Λ = {:.6e}",
        r.pass, r.min_eigenvalue_in, r.min_eigenvalue_anti, r.lambda
    );
    for w in &r.warnings {
        println!("{:<22} warning: {w}", "");
    }
}

fn main() -> tfqkd::Result<()> {
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
    let check = DominanceCheck::default();

    let t = Instant::now();
    let report = verify_dominance(&params, &check)?;
    println!(
        "n_max = {}, {} δ points, tol {:.0e} ({:.1?})",
        check.n_max,
        check.delta_grid,
        check.tol,
        t.elapsed()
    );
    show("series Λ", &report);

    for scale in [1.01, 1.05] {
        let mut w = DominanceWeights::from_params(&params)?;
        w.lambda *= scale;
        show(&format!("Λ × {scale}"), &verify_dominance_with(&params, &w, &check)?);
    }

    let bright = ProtocolParams {
        mu: 0.3,
        mu1: 0.9,
        mu2: 0.2,
        ..params
    };
    let low = DominanceCheck { n_max: 4, ..check };
    show("bright, n_max = 4", &verify_dominance(&bright, &low)?);
    show("bright, n_max = 20", &verify_dominance(&bright, &check)?);
    Ok(())
}
