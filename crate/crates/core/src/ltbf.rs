//! Long-term beamforming with optional interference subspace nulling.
//!
//! A design starts from the aggregate covariance
//! `Q = I + sum_i alpha_i Q_i + C_v`, where `C_v = (Q_v - I)_+` is the
//! interferer's contribution with the noise floor removed. Each UE gets an
//! `r x N` projection `G_i = V_r^H S` with `S = A^{1/2}`, `A ≈ Q^{-1}`, and
//! `V_r` the top-`r` right singular vectors of `Q_i^{1/2} S`.
//!
//! With nulling, a rank-`q` basis `H_v` of the interferer subspace defines the
//! projector `P_v = I - H_v (H_v^H H_v)^{-1} H_v^H`; the design then uses the
//! nulled user covariances `P_v Q_i P_v` and the reduced covariance
//! `R_v = Q - H_v H_v^H`. At run time the received vector is projected with
//! `P_v` before the beamformer, so the applied matrix is `G_i P_v`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::{self, ChannelDrop, NullFrames};
use crate::error::{Error, Result};
use crate::flops;
use crate::inversion::{self, InversionSpec, InversionStatus, Method};
use crate::linalg::{
    self, ComplexMatrix, Eigen, HermitianPsd, condition_number, matmul, matmul_adj, psd_factor, sqrtm_psd,
    top_r_right_singular,
};
use crate::arith::Arith;

/// Eigenvalues of `R_v` below `1 - REDUCED_FLOOR_TOL` are raised to that level.
pub const REDUCED_FLOOR_TOL: f64 = 1e-6;
/// Relative eigenvalue cut used when factoring user covariances.
const FACTOR_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct CovarianceSet {
    /// Per-UE SRS covariances `Q_i`, unscaled.
    pub users: Vec<HermitianPsd>,
    pub alpha: Vec<f64>,
    /// Interferer covariance estimate including the noise identity.
    pub interferer: Option<HermitianPsd>,
    /// `(Q_v - I)_+`.
    pub interferer_contribution: Option<HermitianPsd>,
    pub q: HermitianPsd,
    /// `Q_v` is an exact expectation rather than a sample estimate.
    pub analytic: bool,
}

impl CovarianceSet {
    pub fn new(users: Vec<HermitianPsd>, alpha: Vec<f64>, interferer: Option<HermitianPsd>, analytic: bool) -> Result<Self> {
        let contribution = interferer.as_ref().map(interferer_contribution).transpose()?;
        let n = users.first().map(HermitianPsd::dim).or(interferer.as_ref().map(HermitianPsd::dim));
        let n = n.ok_or_else(|| Error::Invalid("covariance set needs a user or an interferer".into()))?;
        let q = assemble_q(n, &users, &alpha, contribution.as_ref())?;
        Ok(Self { users, alpha, interferer, interferer_contribution: contribution, q, analytic })
    }

    /// SRS covariances of every UE and the interferer estimate at the drop's instant.
    pub fn from_drop(drop: &ChannelDrop, frames: NullFrames) -> Result<Self> {
        let users = (0..drop.n_ue()).map(|i| drop.srs_covariance(i)).collect::<Result<Vec<_>>>()?;
        let interferer = match drop.interferer {
            Some(_) => Some(channel::noncoherent_interference_covariance(drop, frames)?),
            None => None,
        };
        Self::new(users, drop.ue_alpha.clone(), interferer, frames == NullFrames::Analytic)
    }

    pub fn dim(&self) -> usize {
        self.q.dim()
    }

    /// `I + sum_i alpha_i Q_i`: the aggregate without any interferer term.
    pub fn user_only(&self) -> Result<HermitianPsd> {
        assemble_q(self.dim(), &self.users, &self.alpha, None)
    }
}

/// `(Q_v - I)_+`: eigenvalues shifted down by the unit noise level and clipped at zero.
pub fn interferer_contribution(qv: &HermitianPsd) -> Result<HermitianPsd> {
    let e = qv.eigen()?;
    Ok(HermitianPsd::from_eigen(Eigen {
        values: e.values.iter().map(|&l| (l - 1.0).max(0.0)).collect(),
        vectors: e.vectors.clone(),
    }))
}

/// `I + sum_i alpha_i Q_i (+ contribution)` in FP64.
pub fn assemble_q(n: usize, users: &[HermitianPsd], alpha: &[f64], contribution: Option<&HermitianPsd>) -> Result<HermitianPsd> {
    if users.len() != alpha.len() {
        return Err(Error::Dimension(format!("{} covariances with {} SNRs", users.len(), alpha.len())));
    }
    let mut q = ComplexMatrix::identity(n);
    for (qi, &a) in users.iter().zip(alpha) {
        q = q.add_scaled(qi.matrix(), a)?;
    }
    if let Some(c) = contribution {
        q = q.add(c.matrix())?;
    }
    HermitianPsd::symmetrized(&q)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NullingConfig {
    pub enabled: bool,
    /// Nulling rank `q`.
    pub rank: usize,
    /// When set, `q` is the smallest rank capturing this fraction of the
    /// interferer's eigenvalue energy, and `rank` is ignored.
    pub energy_threshold: Option<f64>,
}

impl Default for NullingConfig {
    fn default() -> Self {
        Self { enabled: false, rank: 3, energy_threshold: None }
    }
}

impl NullingConfig {
    pub fn off() -> Self {
        Self::default()
    }

    pub fn with_rank(rank: usize) -> Self {
        Self { enabled: true, rank, energy_threshold: None }
    }

    pub fn auto(threshold: f64) -> Self {
        Self { enabled: true, rank: 1, energy_threshold: Some(threshold) }
    }

    /// Nulling rank to use for interferer covariance `qv`.
    pub fn resolve_rank(&self, qv: &HermitianPsd) -> Result<usize> {
        let n = qv.dim();
        let q = match self.energy_threshold {
            None => self.rank,
            Some(t) => {
                if !(t > 0.0 && t <= 1.0) {
                    return Err(Error::Config(format!("energy_threshold {t} must lie in (0, 1]")));
                }
                let lam: Vec<f64> = qv.eigen()?.values.iter().map(|&l| (l - 1.0).max(0.0)).collect();
                let total: f64 = lam.iter().sum();
                let mut acc = 0.0;
                let mut q = lam.len();
                for (i, l) in lam.iter().enumerate() {
                    acc += l;
                    if acc >= t * total {
                        q = i + 1;
                        break;
                    }
                }
                q.max(1)
            }
        };
        if q == 0 || q >= n {
            return Err(Error::Config(format!("nulling rank {q} must satisfy 1 <= q < {n}")));
        }
        Ok(q)
    }
}

/// `H_v = U_q diag(λ_q)^{1/2}` from the top eigenpairs of `(Q_v - I)_+`.
///
/// Returns `true` as second value when `q` exceeds the numerical rank; the
/// missing columns are then eigenvectors scaled to `1e-3` of the leading
/// column norm.
pub fn interference_basis(qv: &HermitianPsd, q: usize) -> Result<(ComplexMatrix, bool)> {
    let n = qv.dim();
    if q == 0 || q >= n {
        return Err(Error::Invalid(format!("nulling rank {q} must satisfy 1 <= q < {n}")));
    }
    let e = qv.eigen()?;
    let top = (e.max() - 1.0).max(0.0);
    let cut = 1e-10 * top.max(1.0);
    let pad = 1e-6 * top.max(1.0);
    let mut padded = false;
    let mut h = ComplexMatrix::zeros(n, q);
    for k in 0..q {
        let mut l = e.values[k] - 1.0;
        if l <= cut {
            padded = true;
            l = pad;
        }
        let s = l.sqrt();
        for i in 0..n {
            h[(i, k)] = e.vectors[(i, k)] * s;
        }
    }
    Ok((h, padded))
}

/// Projector onto the orthogonal complement of `range(H_v)`.
///
/// Returns `(P_v, M)` with `M = (H_v^H H_v)^{-1}` and a flag when the Gram
/// matrix had to be regularized.
pub fn nulling_projector(hv: &ComplexMatrix) -> Result<(ComplexMatrix, ComplexMatrix, bool)> {
    let n = hv.rows();
    let hh = hv.adjoint();
    let gram = HermitianPsd::symmetrized(&matmul(&hh, hv, Arith::FP64)?)?;
    let ge = gram.eigen()?;
    let mut regularized = false;
    let m = if ge.min() <= 1e-12 * ge.max() {
        regularized = true;
        let delta = 1e-12 * ge.max().max(f64::MIN_POSITIVE);
        linalg::lu_inverse(&gram.matrix().add(&ComplexMatrix::identity(hv.cols()).scaled(delta))?)?
    } else {
        linalg::lu_inverse(gram.matrix())?
    };
    let z = matmul(hv, &m, Arith::FP64)?;
    let p = ComplexMatrix::identity(n).sub(&matmul(&z, &hh, Arith::FP64)?)?;
    Ok((p.hermitian_part()?, m, regularized))
}

/// `P_v Q_i P_v` from the four-term expansion, using only `N x q` products.
///
/// With `W = Q_i H_v`, `Z = H_v M`, `K = H_v^H W` and `Y = W - Z K`:
/// `P_v Q_i P_v = Q_i - Z W^H - Y Z^H`.
pub fn nulled_user_covariance(qi: &HermitianPsd, hv: &ComplexMatrix, m: &ComplexMatrix) -> Result<HermitianPsd> {
    let w = matmul(qi.matrix(), hv, Arith::FP64)?;
    let z = matmul(hv, m, Arith::FP64)?;
    let k = matmul(&hv.adjoint(), &w, Arith::FP64)?;
    let y = w.sub(&matmul(&z, &k, Arith::FP64)?)?;
    let out = qi.matrix().sub(&matmul_adj(&z, &w)?)?.sub(&matmul_adj(&y, &z)?)?;
    HermitianPsd::symmetrized(&out)
}

/// `Q - contribution`, symmetrized, with eigenvalues floored at `1 - 1e-6`.
///
/// Returns the number of floored eigenvalues.
pub fn reduced_covariance(q: &HermitianPsd, contribution: &HermitianPsd) -> Result<(HermitianPsd, usize)> {
    let r = q.sub(contribution)?;
    let e = r.eigen()?;
    let floor = 1.0 - REDUCED_FLOOR_TOL;
    let floored = e.values.iter().filter(|&&l| l < floor).count();
    if floored == 0 {
        return Ok((r, 0));
    }
    let values = e.values.iter().map(|&l| l.max(floor)).collect();
    Ok((HermitianPsd::from_eigen(Eigen { values, vectors: e.vectors.clone() }), floored))
}

/// `[F S]_r S`: top-`r` right singular vectors of `F S`, mapped through `S`.
///
/// `F` is any factor with `F^H F = Q_i`.
fn project_with_factor(factor: &ComplexMatrix, s: &HermitianPsd, r: usize) -> Result<ComplexMatrix> {
    let b = matmul(factor, s.matrix(), Arith::FP64)?;
    let v = top_r_right_singular(&b, r)?;
    matmul(&v, s.matrix(), Arith::FP64)
}

/// Exact LTBF projection `[Q_i^{1/2} Q^{-1/2}]_r Q^{-1/2}` in FP64.
pub fn exact_projection(qi: &HermitianPsd, q: &HermitianPsd, r: usize) -> Result<ComplexMatrix> {
    check_rank(r, q.dim())?;
    let s = linalg::invsqrtm_psd(q, None)?;
    project_with_factor(&psd_factor(qi, FACTOR_TOL)?, &s, r)
}

/// As [`exact_projection`] with `Q^{-1/2}` replaced by the square root of an approximate inverse.
pub fn approx_projection(qi: &HermitianPsd, q: &HermitianPsd, r: usize, spec: &InversionSpec) -> Result<(ComplexMatrix, InversionStatus)> {
    check_rank(r, q.dim())?;
    let (a, status) = inversion::approx_inverse(q, spec)?;
    let s = sqrtm_psd(&a)?;
    Ok((project_with_factor(&psd_factor(qi, FACTOR_TOL)?, &s, r)?, status))
}

fn check_rank(r: usize, n: usize) -> Result<()> {
    if r == 0 || r > n {
        return Err(Error::Invalid(format!("projection rank {r} must satisfy 1 <= r <= {n}")));
    }
    Ok(())
}

/// Per-UE beamformers with provenance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BeamformerSet {
    /// Design beamformers `G_i`, each `r x N`.
    pub g: Vec<ComplexMatrix>,
    /// Run-time projector `P_v` when nulling is active.
    pub projector: Option<ComplexMatrix>,
    pub r: usize,
    pub spec: InversionSpec,
    pub nulling: NullingConfig,
    pub cond_q: f64,
    pub cond_rv: Option<f64>,
    pub status: InversionStatus,
    /// Operations spent on nulling: basis, projector, nulled covariances.
    pub nulling_flops: u64,
    pub warnings: Vec<String>,
}

impl BeamformerSet {
    /// Matrix applied to the received vector: `G_i`, or `G_i P_v` with nulling.
    pub fn applied(&self, ue: usize) -> Result<ComplexMatrix> {
        match &self.projector {
            None => Ok(self.g[ue].clone()),
            Some(p) => matmul(&self.g[ue], p, Arith::FP64),
        }
    }

    pub fn provenance_json(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Provenance<'a> {
            spec: String,
            method: &'a str,
            order: usize,
            profile: String,
            nulling: bool,
            q: Option<usize>,
            r: usize,
            cond_q: f64,
            cond_rv: Option<f64>,
            status: &'a InversionStatus,
            nulling_flops: u64,
            warnings: &'a [String],
        }
        let p = Provenance {
            spec: self.spec.to_string(),
            method: self.spec.method.family(),
            order: self.spec.method.order(),
            profile: self.spec.arith.to_string(),
            nulling: self.nulling.enabled,
            q: self.nulling.enabled.then_some(self.nulling.rank),
            r: self.r,
            cond_q: self.cond_q,
            cond_rv: self.cond_rv,
            status: &self.status,
            nulling_flops: self.nulling_flops,
            warnings: &self.warnings,
        };
        serde_json::to_string(&p).map_err(|e| Error::Format(e.to_string()))
    }
}

/// Everything about a design that does not depend on the inversion method.
///
/// Sweeps build one of these per drop and nulling setting and reuse it for
/// every method, precision and order.
#[derive(Debug, Clone)]
pub struct LtbfDesign {
    /// Matrix to invert: `Q`, or `R_v` with nulling.
    pub target: HermitianPsd,
    /// Per-UE factors `F_i` with `F_i^H F_i` equal to `Q_i` or `P_v Q_i P_v`.
    pub factors: Vec<ComplexMatrix>,
    pub projector: Option<ComplexMatrix>,
    pub basis: Option<ComplexMatrix>,
    /// Nulling settings with the rank resolved.
    pub nulling: NullingConfig,
    pub cond_q: f64,
    pub cond_rv: Option<f64>,
    pub nulling_flops: u64,
    pub warnings: Vec<String>,
}

impl LtbfDesign {
    pub fn new(covs: &CovarianceSet, nulling: &NullingConfig) -> Result<Self> {
        let cond_q = condition_number(&covs.q)?;
        let mut warnings = Vec::new();
        if !nulling.enabled {
            let factors = covs.users.iter().map(|qi| psd_factor(qi, FACTOR_TOL)).collect::<Result<Vec<_>>>()?;
            return Ok(Self {
                target: covs.q.clone(),
                factors,
                projector: None,
                basis: None,
                nulling: NullingConfig { enabled: false, ..*nulling },
                cond_q,
                cond_rv: None,
                nulling_flops: 0,
                warnings,
            });
        }
        let qv = covs.interferer.as_ref().ok_or_else(|| Error::Invalid("nulling requested without an interferer estimate".into()))?;
        let q = nulling.resolve_rank(qv)?;
        let (built, spent) = flops::measure(|| -> Result<_> {
            let (hv, padded) = interference_basis(qv, q)?;
            if padded {
                warnings.push(format!("nulling rank {q} exceeds the interferer's numerical rank"));
            }
            let (pv, m, regularized) = nulling_projector(&hv)?;
            if regularized {
                warnings.push("interference basis Gram matrix regularized".into());
            }
            let nulled = covs.users.iter().map(|qi| nulled_user_covariance(qi, &hv, &m)).collect::<Result<Vec<_>>>()?;
            Ok((hv, pv, nulled))
        });
        let (hv, pv, nulled) = built?;
        let hv_hh = HermitianPsd::symmetrized(&matmul_adj(&hv, &hv)?)?;
        let rv = if covs.analytic {
            covs.user_only()?
        } else {
            let (rv, floored) = reduced_covariance(&covs.q, &hv_hh)?;
            if floored > q {
                warnings.push(format!("{floored} eigenvalues of the reduced covariance floored; interferer estimate mismatch"));
            }
            rv
        };
        let cond_rv = condition_number(&rv)?;
        let factors = nulled.iter().map(|qi| psd_factor(qi, FACTOR_TOL)).collect::<Result<Vec<_>>>()?;
        Ok(Self {
            target: rv,
            factors,
            projector: Some(pv),
            basis: Some(hv),
            nulling: NullingConfig { enabled: true, rank: q, energy_threshold: nulling.energy_threshold },
            cond_q,
            cond_rv: Some(cond_rv),
            nulling_flops: spent,
            warnings,
        })
    }

    pub fn n_ue(&self) -> usize {
        self.factors.len()
    }

    /// Beamformers from an already computed approximate inverse `a`.
    pub fn from_inverse(&self, r: usize, spec: InversionSpec, a: &HermitianPsd, status: InversionStatus) -> Result<BeamformerSet> {
        check_rank(r, self.target.dim())?;
        let s = sqrtm_psd(a)?;
        let g = self.factors.iter().map(|f| project_with_factor(f, &s, r)).collect::<Result<Vec<_>>>()?;
        let mut warnings = self.warnings.clone();
        if status.stagnated_columns > 0 || status.diverged {
            warnings.push(format!("inversion status {}", status.flags()));
        }
        Ok(BeamformerSet {
            g,
            projector: self.projector.clone(),
            r,
            spec,
            nulling: self.nulling,
            cond_q: self.cond_q,
            cond_rv: self.cond_rv,
            status,
            nulling_flops: self.nulling_flops,
            warnings,
        })
    }

    pub fn beamformers(&self, r: usize, spec: &InversionSpec) -> Result<BeamformerSet> {
        let (a, status) = inversion::approx_inverse(&self.target, spec)?;
        self.from_inverse(r, *spec, &a, status)
    }

    /// Beamformers for every order `1..=spec.method.order()` from one solver run.
    pub fn trajectory(&self, r: usize, spec: &InversionSpec) -> Result<Vec<BeamformerSet>> {
        let inverses = inversion::approx_inverse_trajectory(&self.target, spec)?;
        inverses
            .into_iter()
            .enumerate()
            .map(|(i, (a, status))| {
                let method = match spec.method {
                    Method::Exact => Method::Exact,
                    Method::Cg(_) => Method::Cg(i + 1),
                    Method::Poly(_) => Method::Poly(i + 1),
                };
                self.from_inverse(r, InversionSpec { method, ..*spec }, &a, status)
            })
            .collect()
    }
}

/// One-shot construction: prepares the design and builds beamformers for `spec`.
pub fn build_beamformers(covs: &CovarianceSet, r: usize, spec: &InversionSpec, nulling: &NullingConfig) -> Result<BeamformerSet> {
    LtbfDesign::new(covs, nulling)?.beamformers(r, spec)
}

/// `scale * h h^H`.
pub fn rank_one(h: &[Complex64], scale: f64) -> ComplexMatrix {
    let n = h.len();
    ComplexMatrix::from_fn(n, n, |i, j| h[i] * h[j].conj() * scale)
}
