//! Interference subspace nulling: conditioning and low-precision CG beamformers.

use ltbf::arith::ArithmeticProfile;
use ltbf::channel::{generate_drop, NullFrames, ScenarioConfig};
use ltbf::inversion::{InversionSpec, Method};
use ltbf::ltbf::{CovarianceSet, LtbfDesign, NullingConfig};
use ltbf::metrics::evaluate_ltbf;

fn main() -> ltbf::error::Result<()> {
    let drop = generate_drop(&ScenarioConfig::default(), 1)?;
    let covs = CovarianceSet::from_drop(&drop, NullFrames::Sampled(100))?;
    for nulling in [NullingConfig::off(), NullingConfig::with_rank(3)] {
        let design = LtbfDesign::new(&covs, &nulling)?;
        let label = if nulling.enabled { "nulled" } else { "plain" };
        println!("{label}: cond(Q) = {:.1}, cond(target) = {:.1}", design.cond_q, design.cond_rv.unwrap_or(design.cond_q));
        let exact = design.beamformers(1, &InversionSpec::exact())?;
        let cap = |c: &[f64]| c.iter().sum::<f64>() / c.len() as f64;
        println!("  exact fp64 mean capacity {:.3}", cap(&evaluate_ltbf(&drop, &exact)?.capacity));
        for p in [ArithmeticProfile::Fp32, ArithmeticProfile::Q15_16, ArithmeticProfile::Q7_16] {
            let traj = design.trajectory(1, &InversionSpec::new(Method::Cg(6), p))?;
            let caps: Vec<String> = traj.iter().map(|b| evaluate_ltbf(&drop, b).map(|m| format!("{:.3}", cap(&m.capacity)))).collect::<Result<_, _>>()?;
            println!("  cg k=1..6 {p:>7}: {}", caps.join(" "));
        }
    }
    Ok(())
}
