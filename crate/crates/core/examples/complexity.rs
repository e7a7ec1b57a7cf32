//! Measured multiply-add counts fitted to the cost models.

use ltbf::channel::ScenarioConfig;
use ltbf::harness::complexity::verify_complexity;

fn main() -> ltbf::error::Result<()> {
    let report = verify_complexity(&ScenarioConfig::default())?;
    print!("{report}");
    for fit in &report.fits {
        for s in &fit.samples {
            println!("{:>18} N={:<3} param={} flops={:>9} ratio={:.3}", fit.name, s.n, s.param, s.flops, s.flops as f64 / s.model);
        }
    }
    Ok(())
}
