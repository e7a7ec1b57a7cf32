//! A small Monte Carlo sweep written to CSV, followed by the trend checks.

use ltbf::harness::{checks, emit, run_sweep, SweepSpec};

fn main() -> ltbf::error::Result<()> {
    let spec = SweepSpec::from_toml(
        r#"
cg_iterations = [1, 2, 3, 4, 20]
poly_degrees = [4]
precisions = ["fp32", "q15.16", "q7.16"]
nulling = "both"
q = [3]
n_drops = 6
[scenario]
seed = 11
"#,
        &[],
    )?;
    let res = run_sweep(&spec, 2)?;
    let dir = std::env::temp_dir().join("ltbf-sweep-example");
    let files = emit::write_all(&res, &dir)?;
    println!("{} records, {} files in {}", res.records.len(), files.len(), dir.display());
    for c in checks::trend_checks(&res) {
        println!("{c}");
    }
    Ok(())
}
