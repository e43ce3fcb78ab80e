//! Optimised rate-distance curve written as CSV, with the repeaterless
//! bound alongside for comparison.
//!
//! ```text
//! cargo run --release --example rate_curve [two-phase|four-phase] [log10 N] [out.csv]
//! ```

use std::fs::File;
use std::io::{self, BufWriter, Write};

use tfqkd::optimize::{rate_curve, write_curve_csv, Sweep};
use tfqkd::{ExperimentConfig, Variant};

fn main() -> tfqkd::Result<()> {
    let mut args = std::env::args().skip(1);
    let variant = match args.next().as_deref() {
        Some("four-phase") => Variant::FourPhase,
        _ => Variant::TwoPhase,
    };
    let exponent: i32 = args.next().and_then(|a| a.parse().ok()).unwrap_or(13);
    let config = ExperimentConfig::reference(10f64.powi(exponent), variant);

    let sweep = Sweep::new(Sweep::range(0.0, 500.0, 10.0)?, config);
    let curve = rate_curve(&sweep)?;

    let comment = format!("{variant:?}, N = 1e{exponent}");
    let out: Box<dyn Write> = match args.next() {
        Some(path) => Box::new(BufWriter::new(File::create(path)?)),
        None => Box::new(io::stdout().lock()),
    };
    write_curve_csv(out, &curve, &config, Some(&comment))?;

    let last = curve.iter().rev().find(|r| r.feasible());
    eprintln!("last feasible distance: {:?} km", last.map(|r| r.distance_km));
    Ok(())
}
