//! Measured multiply-add counts against the asymptotic cost models.

use std::fmt;

use serde::Serialize;

use crate::arith::Arith;
use crate::channel::{self, ArrayGeometry, NullFrames, ScenarioConfig};
use crate::error::Result;
use crate::flops;
use crate::inversion::{self, InversionSpec, Method};
use crate::ltbf::{interference_basis, nulled_user_covariance, nulling_projector, CovarianceSet, LtbfDesign, NullingConfig};

/// Largest allowed relative deviation of any sample from the fitted model.
pub const MAX_DEVIATION: f64 = 0.15;

/// Array sizes used for the fit, as (nx, ny) panels.
pub const GEOMETRIES: [(usize, usize); 3] = [(4, 4), (8, 4), (8, 8)];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Sample {
    pub n: usize,
    /// Iterations, degree, nulling rank or projection rank.
    pub param: usize,
    pub flops: u64,
    pub model: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelFit {
    pub name: &'static str,
    pub model: &'static str,
    /// Constant `c` minimizing the worst relative deviation of `flops ~ c * model`.
    pub coefficient: f64,
    pub max_deviation: f64,
    pub samples: Vec<Sample>,
}

impl ModelFit {
    fn fit(name: &'static str, model: &'static str, samples: Vec<Sample>) -> Self {
        let ratios: Vec<f64> = samples.iter().map(|s| s.flops as f64 / s.model).collect();
        let lo = ratios.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = ratios.iter().copied().fold(0.0, f64::max);
        // geometric midpoint: equal relative distance to both extremes
        let c = (lo * hi).sqrt();
        let max_deviation = ratios.iter().map(|r| (r / c - 1.0).abs()).fold(0.0, f64::max);
        Self { name, model, coefficient: c, max_deviation, samples }
    }

    pub fn passed(&self) -> bool {
        self.max_deviation <= MAX_DEVIATION
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComplexityReport {
    pub fits: Vec<ModelFit>,
    /// Named flop ratios such as CG at k=4 over k=2.
    pub ratios: Vec<(String, f64)>,
}

impl ComplexityReport {
    pub fn passed(&self) -> bool {
        self.fits.iter().all(ModelFit::passed)
    }
}

impl fmt::Display for ComplexityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "model,form,coefficient,max_deviation,pass")?;
        for m in &self.fits {
            writeln!(f, "{},{},{:.6},{:.4},{}", m.name, m.model, m.coefficient, m.max_deviation, m.passed())?;
        }
        for (name, r) in &self.ratios {
            writeln!(f, "# ratio {name} = {r:.4}")?;
        }
        Ok(())
    }
}

fn scenario_for(base: &ScenarioConfig, (nx, ny): (usize, usize)) -> ScenarioConfig {
    ScenarioConfig {
        geometry: ArrayGeometry { nx, ny, spacing: base.geometry.spacing },
        streams_per_ue: base.streams_per_ue.max(2),
        interferer: true,
        interferer_paths: base.interferer_paths.max(3),
        ..base.clone()
    }
}

fn inversion_flops(q: &crate::linalg::HermitianPsd, method: Method) -> Result<u64> {
    let spec = InversionSpec { method, arith: Arith::FP64, ..InversionSpec::exact() };
    Ok(inversion::approx_inverse(q, &spec)?.1.flops)
}

/// Measures the counters on drops of `base` resized to each of [`GEOMETRIES`].
pub fn verify_complexity(base: &ScenarioConfig) -> Result<ComplexityReport> {
    let mut cg = Vec::new();
    let mut poly = Vec::new();
    let mut nulled = Vec::new();
    let mut projection = Vec::new();
    let mut ratios = Vec::new();
    for geom in GEOMETRIES {
        let cfg = scenario_for(base, geom);
        cfg.validate()?;
        let drop = channel::generate_drop(&cfg, 0)?;
        let n = drop.n_rx();
        let n3 = (n * n * n) as f64;
        let covs = CovarianceSet::from_drop(&drop, NullFrames::Analytic)?;
        for k in [2, 4, 6] {
            let flops = inversion_flops(&covs.q, Method::Cg(k))?;
            cg.push(Sample { n, param: k, flops, model: k as f64 * n3 });
        }
        for d in [3, 5, 7] {
            let flops = inversion_flops(&covs.q, Method::Poly(d))?;
            poly.push(Sample { n, param: d, flops, model: (d - 1) as f64 * n3 });
        }
        let qv = covs.interferer.as_ref().expect("interferer enabled");
        for q in 1..=3 {
            let (hv, _) = interference_basis(qv, q)?;
            let (_, m, _) = nulling_projector(&hv)?;
            let (out, flops) = flops::measure(|| nulled_user_covariance(&covs.users[0], &hv, &m));
            out?;
            nulled.push(Sample { n, param: q, flops, model: (q * n * n) as f64 });
        }
        let design = LtbfDesign::new(&covs, &NullingConfig::off())?;
        let x = vec![num_complex::Complex64::new(1.0, 0.0); n];
        for r in [1, 2] {
            let g = design.beamformers(r, &InversionSpec::exact())?.g.swap_remove(0);
            let (out, flops) = flops::measure(|| g.mul_vec(&x, Arith::FP64));
            out?;
            projection.push(Sample { n, param: r, flops, model: (r * n) as f64 });
        }
        let ratio = |v: &[Sample], a: usize, b: usize| {
            let f = |p| v.iter().find(|s| s.n == n && s.param == p).map_or(f64::NAN, |s| s.flops as f64);
            f(a) / f(b)
        };
        ratios.push((format!("cg k=4/k=2 at N={n}"), ratio(&cg, 4, 2)));
        ratios.push((format!("poly d=5/d=3 at N={n}"), ratio(&poly, 5, 3)));
        ratios.push((format!("nulled covariance q=2/q=1 at N={n}"), ratio(&nulled, 2, 1)));
    }
    Ok(ComplexityReport {
        fits: vec![
            ModelFit::fit("cg_inverse", "k*N^3", cg),
            ModelFit::fit("poly_inverse", "(d-1)*N^3", poly),
            ModelFit::fit("nulled_covariance", "q*N^2", nulled),
            ModelFit::fit("projection", "r*N", projection),
        ],
        ratios,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fit_of_exact_model_has_zero_deviation() {
        let s = (1..4).map(|p| Sample { n: 8, param: p, flops: 3 * p as u64, model: p as f64 }).collect();
        let f = ModelFit::fit("x", "p", s);
        assert!((f.coefficient - 3.0).abs() < 1e-12);
        assert!(f.max_deviation < 1e-12);
    }

    #[test]
    fn deviation_is_symmetric_in_log_space() {
        let s = vec![Sample { n: 1, param: 1, flops: 1, model: 1.0 }, Sample { n: 1, param: 2, flops: 4, model: 1.0 }];
        let f = ModelFit::fit("x", "p", s);
        assert!((f.coefficient - 2.0).abs() < 1e-12);
        assert!((f.max_deviation - 1.0).abs() < 1e-12);
    }
}
