//! Parameter search at a single distance, showing how each restart
//! progressed.
//!
//! ```text
//! cargo run --release --example optimize_point [distance_km] [log10 N] [four-phase]
//! ```

use std::time::Instant;

use tfqkd::optimize::{optimize_point, OptimizationProblem};
use tfqkd::{ExperimentConfig, Variant};

fn main() -> tfqkd::Result<()> {
    let mut args = std::env::args().skip(1);
    let distance: f64 = args.next().and_then(|a| a.parse().ok()).unwrap_or(300.0);
    let exponent: i32 = args.next().and_then(|a| a.parse().ok()).unwrap_or(13);
    let variant = match args.next().as_deref() {
        Some("four-phase") => Variant::FourPhase,
        _ => Variant::TwoPhase,
    };
    let problem = OptimizationProblem::new(ExperimentConfig::reference(10f64.powi(exponent), variant), distance);

    let t = Instant::now();
    let best = optimize_point(&problem)?;
    println!("{variant:?}, N = 1e{exponent}, {distance} km ({:.1?})", t.elapsed());
    for (i, r) in best.trace.iter().enumerate() {
        let last = r.improvements.last().map_or(0, |(at, _)| *at);
        println!(
            "restart {i}: score {:+.4e} after {} evals, last gain at {last}",
            r.best_score, r.evals
        );
    }
    println!(
        "\nrate {:.4e} per pulse, e_ph <= {:.4}",
        best.rate(),
        best.result.e_ph_upper
    );
    println!("{:#?}", best.params);
    Ok(())
}
