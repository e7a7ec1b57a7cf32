//! Post-beamforming MMSE SINR, capacity and distribution statistics.
//!
//! Signal model per subcarrier:
//! `y = sum_j sqrt(alpha_j) H_j x_j + sqrt(alpha_v) h_v x_v + w` with unit
//! variance symbols and `w ~ CN(0, sigma^2 I)`. Everything here runs in FP64.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::arith::Arith;
use crate::channel::ChannelDrop;
use crate::error::{Error, Result};
use crate::linalg::{ComplexMatrix, HermitianPsd, matmul, matmul_adj};
use crate::ltbf::BeamformerSet;

/// Per-UE results of one drop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkMetrics {
    /// `[ue][subcarrier][stream]`, linear.
    pub sinr: Vec<Vec<Vec<f64>>>,
    /// Per UE: mean over subcarriers of `sum_s log2(1 + SINR_s)`.
    pub capacity: Vec<f64>,
}

impl LinkMetrics {
    fn from_sinr(sinr: Vec<Vec<Vec<f64>>>) -> Self {
        let capacity = sinr.iter().map(|per_sc| capacity_of(per_sc)).collect();
        Self { sinr, capacity }
    }

    /// Mean linear SINR of a UE over subcarriers and streams, in dB.
    pub fn mean_sinr_db(&self, ue: usize) -> f64 {
        let all: Vec<f64> = self.sinr[ue].iter().flatten().copied().collect();
        10.0 * (all.iter().sum::<f64>() / all.len() as f64).log10()
    }
}

/// Mean over subcarriers of the per-subcarrier sum-stream capacity.
pub fn capacity_of(per_subcarrier: &[Vec<f64>]) -> f64 {
    let total: f64 = per_subcarrier.iter().map(|s| s.iter().map(|x| (1.0 + x).log2()).sum::<f64>()).sum();
    total / per_subcarrier.len() as f64
}

/// `C = sigma^2 G G^H + sum_j p_j (G H_j)(G H_j)^H`, where `sources` lists every
/// interfering channel (co-scheduled UEs and the interferer) with its energy.
pub fn effective_noise_covariance(g: &ComplexMatrix, sources: &[(&ComplexMatrix, f64)], noise_var: f64) -> Result<HermitianPsd> {
    let mut c = matmul_adj(g, g)?.scaled(noise_var);
    for (h, p) in sources {
        let gh = matmul(g, h, Arith::FP64)?;
        c = c.add_scaled(&matmul_adj(&gh, &gh)?, *p)?;
    }
    HermitianPsd::symmetrized(&c)
}

/// Cholesky factor `L` (lower) of a Hermitian positive-definite matrix.
fn cholesky(c: &ComplexMatrix) -> Result<ComplexMatrix> {
    let n = c.rows();
    let mut l = ComplexMatrix::zeros(n, n);
    let scale = (0..n).map(|i| c[(i, i)].re.abs()).fold(0.0, f64::max);
    for j in 0..n {
        let mut d = c[(j, j)].re;
        for k in 0..j {
            d -= l[(j, k)].norm_sqr();
        }
        if !(d > 1e-14 * scale) {
            return Err(Error::Singular);
        }
        let d = d.sqrt();
        l[(j, j)] = Complex64::new(d, 0.0);
        for i in j + 1..n {
            let mut s = c[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)].conj();
            }
            l[(i, j)] = s / d;
        }
    }
    Ok(l)
}

/// Solves `L X = B` for lower-triangular `L`.
fn forward_solve(l: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    let (n, m) = b.shape();
    let mut x = b.clone();
    for j in 0..m {
        for i in 0..n {
            let mut s = x[(i, j)];
            for k in 0..i {
                s -= l[(i, k)] * x[(k, j)];
            }
            x[(i, j)] = s / l[(i, i)];
        }
    }
    x
}

/// Per-stream MMSE SINR: `1 / [(I + p H^H C^{-1} H)^{-1}]_ss - 1`.
pub fn mmse_sinr(h_eff: &ComplexMatrix, c: &HermitianPsd, p: f64) -> Result<Vec<f64>> {
    if h_eff.rows() != c.dim() {
        return Err(Error::Dimension(format!("effective channel {:?} with covariance of size {}", h_eff.shape(), c.dim())));
    }
    let l = cholesky(c.matrix())?;
    // H^H C^{-1} H = (L^{-1} H)^H (L^{-1} H)
    let w = forward_solve(&l, h_eff);
    let ns = h_eff.cols();
    let mut m = matmul(&w.adjoint(), &w, Arith::FP64)?.scaled(p);
    for s in 0..ns {
        m[(s, s)] += Complex64::new(1.0, 0.0);
    }
    let inv = if ns == 1 {
        ComplexMatrix::from_vec(1, 1, vec![Complex64::new(1.0 / m[(0, 0)].re, 0.0)])?
    } else {
        crate::linalg::lu_inverse(&m)?
    };
    Ok((0..ns).map(|s| (1.0 / inv[(s, s)].re - 1.0).max(0.0)).collect())
}

/// SINRs of every UE when UE `i` is received through `applied[i]` (`None` for the full array).
fn evaluate_with(drop: &ChannelDrop, applied: &[Option<ComplexMatrix>]) -> Result<LinkMetrics> {
    let n_ue = drop.n_ue();
    let mut sinr = Vec::with_capacity(n_ue);
    for i in 0..n_ue {
        let mut per_sc = Vec::with_capacity(drop.n_subcarriers());
        for n in 0..drop.n_subcarriers() {
            let mut sources: Vec<(&ComplexMatrix, f64)> = (0..n_ue)
                .filter(|&j| j != i)
                .map(|j| (&drop.ue_channels[j][n], drop.ue_alpha[j]))
                .collect();
            if let Some(hv) = drop.interferer_channels.get(n) {
                sources.push((hv, drop.interferer_alpha));
            }
            let h = &drop.ue_channels[i][n];
            let s = match &applied[i] {
                Some(g) => {
                    let c = effective_noise_covariance(g, &sources, drop.noise_var)?;
                    mmse_sinr(&matmul(g, h, Arith::FP64)?, &c, drop.ue_alpha[i])?
                }
                None => {
                    let c = full_covariance(drop.n_rx(), &sources, drop.noise_var)?;
                    mmse_sinr(h, &c, drop.ue_alpha[i])?
                }
            };
            per_sc.push(s);
        }
        sinr.push(per_sc);
    }
    Ok(LinkMetrics::from_sinr(sinr))
}

fn full_covariance(n: usize, sources: &[(&ComplexMatrix, f64)], noise_var: f64) -> Result<HermitianPsd> {
    let mut c = ComplexMatrix::identity(n).scaled(noise_var);
    for (h, p) in sources {
        c = c.add_scaled(&matmul_adj(h, h)?, *p)?;
    }
    HermitianPsd::symmetrized(&c)
}

/// Reduced-dimension MMSE through the applied beamformers of `beams`.
pub fn evaluate_ltbf(drop: &ChannelDrop, beams: &BeamformerSet) -> Result<LinkMetrics> {
    if beams.g.len() != drop.n_ue() {
        return Err(Error::Dimension(format!("{} beamformers for {} UEs", beams.g.len(), drop.n_ue())));
    }
    let applied = (0..drop.n_ue()).map(|i| beams.applied(i).map(Some)).collect::<Result<Vec<_>>>()?;
    evaluate_with(drop, &applied)
}

/// Same evaluation with arbitrary per-UE `r x N` matrices.
pub fn evaluate_projections(drop: &ChannelDrop, g: &[ComplexMatrix]) -> Result<LinkMetrics> {
    let applied: Vec<Option<ComplexMatrix>> = g.iter().cloned().map(Some).collect();
    evaluate_with(drop, &applied)
}

/// Full-array instantaneous MMSE.
pub fn evaluate_mmse_baseline(drop: &ChannelDrop) -> Result<LinkMetrics> {
    evaluate_with(drop, &vec![None; drop.n_ue()])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    /// Nearest-rank 10th percentile.
    pub p10: f64,
    /// `(value, rank / n)` in ascending order.
    pub cdf: Vec<(f64, f64)>,
}

/// Nearest-rank percentile of sorted data, `pct` in `(0, 100]`.
pub fn nearest_rank(sorted: &[f64], pct: f64) -> f64 {
    let n = sorted.len();
    let rank = ((pct / 100.0) * n as f64).ceil().max(1.0) as usize;
    sorted[rank.min(n) - 1]
}

pub fn summarize(samples: &[f64]) -> Result<Summary> {
    if samples.is_empty() {
        return Err(Error::Invalid("cannot summarize an empty sample".into()));
    }
    if samples.iter().any(|x| x.is_nan()) {
        return Err(Error::Domain("NaN in samples".into()));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    Ok(Summary {
        mean: samples.iter().sum::<f64>() / n,
        p10: nearest_rank(&sorted, 10.0),
        cdf: sorted.iter().enumerate().map(|(i, &v)| (v, (i + 1) as f64 / n)).collect(),
    })
}

/// Sample covariance of `G (sum_j sqrt(p_j) H_j x_j + w)` over `symbols` draws.
#[doc(hidden)]
pub fn monte_carlo_covariance<R: rand::Rng>(
    g: &ComplexMatrix,
    sources: &[(&ComplexMatrix, f64)],
    noise_var: f64,
    symbols: usize,
    rng: &mut R,
) -> Result<ComplexMatrix> {
    use rand::RngExt;
    use rand_distr::StandardNormal;
    let n = g.cols();
    let mut cn = |var: f64| {
        let s = (var / 2.0).sqrt();
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Complex64::new(re * s, im * s)
    };
    let mut acc = ComplexMatrix::zeros(g.rows(), g.rows());
    for _ in 0..symbols {
        let mut y: Vec<Complex64> = (0..n).map(|_| cn(noise_var)).collect();
        for (h, p) in sources {
            for s in 0..h.cols() {
                let x = cn(*p);
                for (i, yi) in y.iter_mut().enumerate() {
                    *yi += h[(i, s)] * x;
                }
            }
        }
        let z = g.mul_vec(&y, Arith::FP64)?;
        for a in 0..z.len() {
            for b in 0..z.len() {
                acc[(a, b)] += z[a] * z[b].conj();
            }
        }
    }
    Ok(acc.scaled(1.0 / symbols as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{ArrayGeometry, NullFrames, ScenarioConfig, generate_drop};
    use crate::inversion::InversionSpec;
    use crate::ltbf::{CovarianceSet, LtbfDesign, NullingConfig};
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random_matrix(rng: &mut ChaCha8Rng, r: usize, k: usize) -> ComplexMatrix {
        ComplexMatrix::from_fn(r, k, |_, _| c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
    }

    #[test]
    fn white_noise_through_orthonormal_rows() {
        let g = ComplexMatrix::from_real_rows(&[&[1.0, 0.0, 0.0], &[0.0, 0.0, 1.0]]).unwrap();
        let cov = effective_noise_covariance(&g, &[], 2.0).unwrap();
        assert_eq!(cov.matrix(), &ComplexMatrix::diag(&[2.0, 2.0]));
    }

    #[test]
    fn orthogonal_interferer_vanishes() {
        let g = ComplexMatrix::from_real_rows(&[&[1.0, 0.0, 0.0]]).unwrap();
        let h2 = ComplexMatrix::column_vector(&[c(0.0, 0.0), c(3.0, 1.0), c(-1.0, 0.0)]);
        let cov = effective_noise_covariance(&g, &[(&h2, 10.0)], 1.0).unwrap();
        assert_eq!(cov.matrix(), &ComplexMatrix::identity(1));
    }

    #[test]
    fn covariance_matches_monte_carlo() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let g = random_matrix(&mut rng, 2, 6);
        let h1 = random_matrix(&mut rng, 6, 2);
        let h2 = random_matrix(&mut rng, 6, 1);
        let sources = [(&h1, 2.0), (&h2, 5.0)];
        let cov = effective_noise_covariance(&g, &sources, 0.5).unwrap();
        let mc = monte_carlo_covariance(&g, &sources, 0.5, 10_000, &mut rng).unwrap();
        let rel = mc.sub(cov.matrix()).unwrap().frobenius_norm() / cov.matrix().frobenius_norm();
        assert!(rel < 0.03, "{rel}");
    }

    #[test]
    fn scalar_mmse_closed_form() {
        let h = ComplexMatrix::column_vector(&[c(1.0, 1.0), c(0.5, 0.0)]);
        let s = mmse_sinr(&h, &HermitianPsd::diag(&[2.0, 2.0]), 3.0).unwrap();
        assert!((s[0] - 3.0 / 2.0 * 2.25).abs() < 1e-12);
        let zero = ComplexMatrix::zeros(2, 1);
        assert_eq!(mmse_sinr(&zero, &HermitianPsd::identity(2), 3.0).unwrap(), vec![0.0]);
        assert!(mmse_sinr(&h, &HermitianPsd::diag(&[1.0, 0.0]), 1.0).is_err());
    }

    #[test]
    fn orthogonal_streams_decouple() {
        let h = ComplexMatrix::from_real_rows(&[&[2.0, 0.0], &[0.0, 1.0], &[0.0, 0.0]]).unwrap();
        let s = mmse_sinr(&h, &HermitianPsd::identity(3), 0.5).unwrap();
        assert!((s[0] - 2.0).abs() < 1e-12 && (s[1] - 0.5).abs() < 1e-12);
    }

    fn single_ue_cfg() -> ScenarioConfig {
        ScenarioConfig { geometry: ArrayGeometry::new(3, 2), n_ue: 1, interferer: false, n_subcarriers: 4, n_srs: 4, ue_speed_mps: 0.0, ..Default::default() }
    }

    #[test]
    fn lossless_projection_equals_full_mmse() {
        let drop = generate_drop(&single_ue_cfg(), 0).unwrap();
        let set = CovarianceSet::from_drop(&drop, NullFrames::Analytic).unwrap();
        let bf = LtbfDesign::new(&set, &NullingConfig::off()).unwrap().beamformers(6, &InversionSpec::exact()).unwrap();
        let ltbf = evaluate_ltbf(&drop, &bf).unwrap();
        let full = evaluate_mmse_baseline(&drop).unwrap();
        assert!((ltbf.capacity[0] - full.capacity[0]).abs() < 1e-6);
        // matched-filter closed form
        let expect: f64 = drop.ue_channels[0]
            .iter()
            .map(|h| (1.0 + drop.ue_alpha[0] * h.frobenius_norm().powi(2)).log2())
            .sum::<f64>()
            / 4.0;
        assert!((full.capacity[0] - expect).abs() < 1e-9);
    }

    #[test]
    fn invariance_under_left_transforms() {
        let cfg = ScenarioConfig { geometry: ArrayGeometry::new(4, 4), n_ue: 3, streams_per_ue: 2, n_subcarriers: 4, n_srs: 4, interferer_paths: 2, ..Default::default() };
        let drop = generate_drop(&cfg, 1).unwrap();
        let set = CovarianceSet::from_drop(&drop, NullFrames::Analytic).unwrap();
        let bf = LtbfDesign::new(&set, &NullingConfig::off()).unwrap().beamformers(2, &InversionSpec::exact()).unwrap();
        let base = evaluate_ltbf(&drop, &bf).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let t = random_matrix(&mut rng, 2, 2).add(&ComplexMatrix::identity(2)).unwrap();
        let moved: Vec<ComplexMatrix> = bf.g.iter().map(|g| matmul(&t, g, Arith::FP64).unwrap()).collect();
        let other = evaluate_projections(&drop, &moved).unwrap();
        for (a, b) in base.sinr.iter().flatten().flatten().zip(other.sinr.iter().flatten().flatten()) {
            assert!((a - b).abs() <= 1e-9 * a.max(1.0));
        }
    }

    #[test]
    fn orthogonal_extra_ue_leaves_sinr_unchanged() {
        let mut drop = generate_drop(&single_ue_cfg(), 2).unwrap();
        let before = evaluate_mmse_baseline(&drop).unwrap();
        // second UE whose channel is orthogonal to the first on every subcarrier
        let chans: Vec<ComplexMatrix> = drop.ue_channels[0]
            .iter()
            .map(|h| {
                let mut v = ComplexMatrix::zeros(6, 1);
                let (a, b) = (h[(0, 0)], h[(1, 0)]);
                v[(0, 0)] = -b.conj();
                v[(1, 0)] = a.conj();
                v
            })
            .collect();
        drop.ue_channels.push(chans);
        drop.ue_alpha.push(5.0);
        drop.ues.push(drop.ues[0].clone());
        let after = evaluate_mmse_baseline(&drop).unwrap();
        assert!((before.sinr[0][0][0] - after.sinr[0][0][0]).abs() < 1e-9 * before.sinr[0][0][0]);
    }

    #[test]
    fn full_mmse_dominates_exact_ltbf_at_design_instant() {
        let cfg = ScenarioConfig { geometry: ArrayGeometry::new(4, 4), n_subcarriers: 8, n_srs: 8, ue_speed_mps: 0.0, interferer_paths: 2, ..Default::default() };
        for d in 0..5 {
            let drop = generate_drop(&cfg, d).unwrap();
            let set = CovarianceSet::from_drop(&drop, NullFrames::Analytic).unwrap();
            let bf = LtbfDesign::new(&set, &NullingConfig::off()).unwrap().beamformers(1, &InversionSpec::exact()).unwrap();
            let ltbf = evaluate_ltbf(&drop, &bf).unwrap();
            let full = evaluate_mmse_baseline(&drop).unwrap();
            for (a, b) in ltbf.capacity.iter().zip(&full.capacity) {
                assert!(a <= &(b + 1e-9));
            }
        }
    }

    #[test]
    fn capacity_is_recomputable_from_sinr() {
        let m = LinkMetrics::from_sinr(vec![vec![vec![1.0, 3.0], vec![0.0, 7.0]]]);
        assert_eq!(m.capacity[0], ((1.0f64 + 3.0).log2() + 1.0 + 3.0) / 2.0);
    }

    #[test]
    fn summary_examples() {
        let s = summarize(&[2.5; 7]).unwrap();
        assert_eq!((s.mean, s.p10), (2.5, 2.5));
        let v: Vec<f64> = (1..=100).rev().map(f64::from).collect();
        let s = summarize(&v).unwrap();
        assert_eq!(s.p10, 10.0);
        assert!(s.cdf.windows(2).all(|w| w[0].0 <= w[1].0 && w[0].1 < w[1].1));
        assert_eq!(s.cdf.last().unwrap().1, 1.0);
        assert!(summarize(&[]).is_err());
    }
}
