//! Largest distance with a positive finite key for each block size and
//! protocol variant, using the reference experiment constants.
//!
//! ```text
//! cargo run --release --example max_distance [two-phase|four-phase] [log10 N ...]
//! ```

use std::time::Instant;

use tfqkd::optimize::{max_distance, Sweep};
use tfqkd::{ExperimentConfig, Variant};

fn main() -> tfqkd::Result<()> {
    let mut args = std::env::args().skip(1);
    let variant = match args.next().as_deref() {
        Some("four-phase") => Variant::FourPhase,
        _ => Variant::TwoPhase,
    };
    let exponents: Vec<i32> = args.filter_map(|a| a.parse().ok()).collect();
    let exponents = if exponents.is_empty() {
        vec![13, 15, 18]
    } else {
        exponents
    };

    for e in exponents {
        let config = ExperimentConfig::reference(10f64.powi(e), variant);
        let sweep = Sweep::new(Sweep::range(0.0, 500.0, 10.0)?, config);
        let t = Instant::now();
        let found = max_distance(&sweep, 1.0)?;
        let rate = found.best.as_ref().map_or(0.0, |b| b.rate());
        println!(
            "N = 1e{e:<2}  coarse {:>6} km  refined {:>6} km  rate {rate:.3e}  ({:.1?})",
            fmt_km(found.coarse_km),
            fmt_km(found.refined_km),
            t.elapsed()
        );
        if let Some(best) = &found.best {
            println!("           {:?}", best.params);
        }
    }
    Ok(())
}

fn fmt_km(d: Option<f64>) -> String {
    d.map_or_else(|| "-".into(), |v| format!("{v:.0}"))
}
