//! Conjugate gradient and Neumann series inverses under each number format.

use ltbf::arith::{Arith, ArithmeticProfile};
use ltbf::channel::{generate_drop, NullFrames, ScenarioConfig};
use ltbf::inversion::{approx_inverse_trajectory, exact_inverse, InversionSpec, Method};
use ltbf::ltbf::{CovarianceSet, LtbfDesign, NullingConfig};

fn relative_errors(q: &ltbf::linalg::HermitianPsd, method: Method, arith: Arith) -> ltbf::error::Result<Vec<f64>> {
    let exact = exact_inverse(q)?.matrix;
    let spec = InversionSpec { method, arith, ..InversionSpec::exact() };
    approx_inverse_trajectory(q, &spec)?
        .iter()
        .map(|(a, _)| Ok(a.matrix().sub(&exact)?.frobenius_norm() / exact.frobenius_norm()))
        .collect()
}

fn main() -> ltbf::error::Result<()> {
    let drop = generate_drop(&ScenarioConfig::default(), 0)?;
    let covs = CovarianceSet::from_drop(&drop, NullFrames::Analytic)?;
    let reduced = LtbfDesign::new(&covs, &NullingConfig::with_rank(3))?.target;
    println!("cond(Q) = {:.1}, cond(R_v) = {:.1}", ltbf::linalg::condition_number(&covs.q)?, ltbf::linalg::condition_number(&reduced)?);

    let profiles = [ArithmeticProfile::Fp64, ArithmeticProfile::Fp32, ArithmeticProfile::Q15_16, ArithmeticProfile::Q7_16];
    for (name, q) in [("Q", &covs.q), ("R_v", &reduced)] {
        for method in [Method::Cg(8), Method::Poly(8)] {
            println!("{name}, {} orders 1..8, relative error:", method.family());
            for p in profiles {
                let errs: Vec<String> = relative_errors(q, method, Arith::wide(p))?.iter().map(|e| format!("{e:.1e}")).collect();
                println!("  {p:>7}: {}", errs.join(" "));
            }
        }
    }
    Ok(())
}
