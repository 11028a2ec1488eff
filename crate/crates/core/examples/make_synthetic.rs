//! Writes a two-regime synthetic interval series as CSV.
//!
//! Usage: `cargo run -p itsclust --example make_synthetic -- OUT.csv [SEED]`

use itsclust::ingest::write_interval_csv;
use itsclust::synthetic::{demo_regimes, regime_series};

fn main() -> itsclust::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = args.next().unwrap_or_else(|| "synthetic.csv".to_string());
    let seed = args.next().and_then(|s| s.parse().ok()).unwrap_or(42);
    let (series, truth) = regime_series(&demo_regimes(), 2, 3, 4, 150, seed)?;
    write_interval_csv(&series, &out)?;
    let switches = truth.windows(2).filter(|p| p[0] != p[1]).count();
    println!("wrote {} steps of {} series with {switches} regime switches to {out}", series.len(), series.n());
    Ok(())
}
