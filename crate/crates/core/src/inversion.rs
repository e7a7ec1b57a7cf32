//! Approximate inverses of Hermitian positive-definite matrices.
//!
//! Two hardware-style solvers run entirely through an [`Arith`] profile:
//! per-column conjugate gradient with a fixed iteration budget, and a scaled
//! Neumann series evaluated by the recurrence `P_j = I + T P_{j-1}` with
//! `T = I - cQ`. Both expose a trajectory form that yields every iteration
//! count (or degree) from a single run, which is how sweeps use them.
//!
//! Operation counts (complex multiply-accumulates) per call:
//!
//! | method | count |
//! |---|---|
//! | CG, `k` iterations | `N * (k (N^2 + 5N) + N)` |
//! | polynomial, degree `d` | `(d - 1) N^3 + 2 N^2` |
//! | exact | `N^3` |

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::arith::{ArithmeticProfile, Arith};
use crate::error::{Error, Result};
use crate::flops;
use crate::linalg::{self, ComplexMatrix, Eigen, HermitianPsd, dotc, matmul};

/// Eigenvalue floor applied to every approximate inverse.
pub const INVERSE_FLOOR: f64 = 1e-9;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Method {
    Exact,
    Cg(usize),
    Poly(usize),
}

impl Method {
    /// Iteration count or degree; 0 for the exact inverse.
    pub fn order(self) -> usize {
        match self {
            Method::Exact => 0,
            Method::Cg(k) | Method::Poly(k) => k,
        }
    }

    pub fn family(self) -> &'static str {
        match self {
            Method::Exact => "exact",
            Method::Cg(_) => "cg",
            Method::Poly(_) => "poly",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Exact => f.write_str("exact"),
            Method::Cg(k) => write!(f, "cg:{k}"),
            Method::Poly(d) => write!(f, "poly:{d}"),
        }
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        if s == "exact" {
            return Ok(Method::Exact);
        }
        let (name, n) = s.split_once(':').ok_or_else(|| Error::Config(format!("method '{s}' needs the form cg:<k> or poly:<d>")))?;
        let n: usize = n.parse().map_err(|_| Error::Config(format!("bad order in method '{s}'")))?;
        if n == 0 {
            return Err(Error::Config(format!("method '{s}' needs an order of at least 1")));
        }
        match name {
            "cg" => Ok(Method::Cg(n)),
            "poly" => Ok(Method::Poly(n)),
            _ => Err(Error::Config(format!("unknown method '{name}'"))),
        }
    }
}

impl TryFrom<String> for Method {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Method> for String {
    fn from(m: Method) -> String {
        m.to_string()
    }
}

/// Scaling constant `c` of the Neumann series.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scaling {
    /// `c = 2 / (λmax + λmin)` from an FP64 eigendecomposition.
    #[default]
    Spectral,
    /// `c = 1 / tr(Q)`; needs no eigendecomposition.
    Trace,
}

impl FromStr for Scaling {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "spectral" => Ok(Scaling::Spectral),
            "trace" => Ok(Scaling::Trace),
            _ => Err(Error::Config(format!("unknown scaling '{s}' (spectral or trace)"))),
        }
    }
}

impl fmt::Display for Scaling {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scaling::Spectral => "spectral",
            Scaling::Trace => "trace",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct InversionSpec {
    pub method: Method,
    pub arith: Arith,
    #[serde(default)]
    pub scaling: Scaling,
}

impl InversionSpec {
    pub fn exact() -> Self {
        Self { method: Method::Exact, arith: Arith::FP64, scaling: Scaling::Spectral }
    }

    pub fn new(method: Method, profile: ArithmeticProfile) -> Self {
        Self { method, arith: Arith::wide(profile), scaling: Scaling::Spectral }
    }

    /// Parses the CLI pair, e.g. `("cg:4", "q15.16")`.
    pub fn parse(method: &str, precision: &str) -> Result<Self> {
        Ok(Self { method: method.parse()?, arith: precision.parse()?, scaling: Scaling::Spectral })
    }

    pub fn with_scaling(mut self, scaling: Scaling) -> Self {
        self.scaling = scaling;
        self
    }

    pub fn profile(&self) -> ArithmeticProfile {
        self.arith.profile
    }
}

impl fmt::Display for InversionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@{}", self.method, self.arith)?;
        if matches!(self.method, Method::Poly(_)) && self.scaling != Scaling::Spectral {
            write!(f, "/{}", self.scaling)?;
        }
        Ok(())
    }
}

/// Diagnostics attached to an approximate inverse.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct InversionStatus {
    pub flops: u64,
    /// CG columns whose curvature `p^H Q p` quantized to zero.
    pub stagnated_columns: usize,
    /// Neumann iteration matrix with spectral radius at or above one.
    pub diverged: bool,
    /// Eigenvalues raised to the floor after symmetrization.
    pub floored_eigenvalues: usize,
}

impl InversionStatus {
    pub fn flags(&self) -> String {
        let mut f = Vec::new();
        if self.stagnated_columns > 0 {
            f.push(format!("stagnation:{}", self.stagnated_columns));
        }
        if self.diverged {
            f.push("divergence".to_string());
        }
        if self.floored_eigenvalues > 0 {
            f.push(format!("floored:{}", self.floored_eigenvalues));
        }
        if f.is_empty() { "ok".to_string() } else { f.join(";") }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CgTermination {
    /// Ran the full budget.
    Budget,
    /// Residual became exactly zero; the iterate is the solution.
    Converged,
    /// `p^H Q p` was zero in the working precision.
    Stagnated,
}

#[derive(Debug, Clone)]
pub struct CgOutcome {
    pub x: Vec<Complex64>,
    pub termination: CgTermination,
}

fn check_square(q: &ComplexMatrix, n: usize) -> Result<()> {
    if q.rows() != n {
        return Err(Error::Dimension(format!("matrix {:?} with vector of length {n}", q.shape())));
    }
    Ok(())
}

/// Runs CG for up to `k_max` iterations and calls `visit(k, x_k)` after each.
///
/// After an early stop the final iterate is reported for every remaining `k`,
/// without further operations. Returns the termination reason and the
/// iteration at which it happened.
fn cg_run(
    q: &ComplexMatrix,
    b: &[Complex64],
    k_max: usize,
    arith: Arith,
    mut visit: impl FnMut(usize, &[Complex64]),
) -> Result<(CgTermination, usize)> {
    let n = b.len();
    check_square(q, n)?;
    let mut x = vec![ZERO; n];
    let mut r: Vec<Complex64> = b.iter().map(|&z| arith.round_complex(z)).collect();
    let mut p = r.clone();
    let mut rr = arith.round(dotc(&r, &r, arith).re);
    let mut stop = (CgTermination::Budget, k_max);
    for k in 1..=k_max {
        if rr == 0.0 {
            stop = (CgTermination::Converged, k - 1);
            for kk in k..=k_max {
                visit(kk, &x);
            }
            break;
        }
        let qp = q.mul_vec(&p, arith)?;
        let curvature = arith.round(dotc(&p, &qp, arith).re);
        if curvature == 0.0 || !curvature.is_finite() {
            stop = (CgTermination::Stagnated, k - 1);
            for kk in k..=k_max {
                visit(kk, &x);
            }
            break;
        }
        let alpha = arith.round(rr / curvature);
        flops::add(3 * n as u64);
        for i in 0..n {
            x[i] = arith.mac_real(x[i], alpha, p[i]);
            r[i] = arith.mac_real(r[i], -alpha, qp[i]);
        }
        let rr_next = arith.round(dotc(&r, &r, arith).re);
        let beta = arith.round(rr_next / rr);
        for i in 0..n {
            p[i] = arith.mac_real(r[i], beta, p[i]);
        }
        rr = rr_next;
        visit(k, &x);
    }
    Ok(stop)
}

/// Solves `Q x = b` with exactly `k` CG iterations from `x0 = 0` under `arith`.
///
/// `Q` is stored in the working precision before the first product.
pub fn cg_solve(q: &HermitianPsd, b: &[Complex64], k: usize, arith: Arith) -> Result<CgOutcome> {
    if k == 0 {
        return Err(Error::Invalid("CG needs at least one iteration".into()));
    }
    let qq = q.matrix().quantized(arith);
    let mut x = Vec::new();
    let (termination, _) = cg_run(&qq, b, k, arith, |kk, xk| {
        if kk == k {
            x = xk.to_vec();
        }
    })?;
    Ok(CgOutcome { x, termination })
}

/// Raw (unsymmetrized) approximate inverse for one iteration count or degree.
#[derive(Debug, Clone)]
pub struct RawInverse {
    pub order: usize,
    pub matrix: ComplexMatrix,
    pub status: InversionStatus,
}

/// CG inverses for every `k` in `1..=k_max`, column by column, from one run.
///
/// Flop counts per entry equal those of an independent run with that `k`.
pub fn cg_inverse_trajectory(q: &HermitianPsd, k_max: usize, arith: Arith) -> Result<Vec<RawInverse>> {
    if k_max == 0 {
        return Err(Error::Invalid("CG needs at least one iteration".into()));
    }
    let n = q.dim();
    let qq = q.matrix().quantized(arith);
    let mut out: Vec<RawInverse> = (1..=k_max)
        .map(|k| RawInverse { order: k, matrix: ComplexMatrix::zeros(n, n), status: InversionStatus::default() })
        .collect();
    let mut e = vec![ZERO; n];
    for col in 0..n {
        e.iter_mut().for_each(|z| *z = ZERO);
        e[col] = Complex64::new(1.0, 0.0);
        let mut last = flops::current();
        let mut spent = 0u64;
        let (term, at) = cg_run(&qq, &e, k_max, arith, |k, x| {
            let now = flops::current();
            spent += now - last;
            last = now;
            let slot = &mut out[k - 1];
            slot.status.flops += spent;
            for (i, &z) in x.iter().enumerate() {
                slot.matrix[(i, col)] = z;
            }
        })?;
        if term == CgTermination::Stagnated {
            for slot in &mut out[at..] {
                slot.status.stagnated_columns += 1;
            }
        }
    }
    for slot in &mut out {
        slot.matrix = slot.matrix.quantized(arith);
    }
    Ok(out)
}

/// Column-wise CG inverse with `k` iterations per column, symmetrized.
pub fn cg_inverse(q: &HermitianPsd, k: usize, arith: Arith) -> Result<(ComplexMatrix, InversionStatus)> {
    let raw = cg_inverse_trajectory(q, k, arith)?.pop().expect("k >= 1");
    Ok((raw.matrix.hermitian_part()?, raw.status))
}

/// Neumann scaling constant and the spectral radius of `I - cQ`, both in FP64.
pub fn neumann_scaling(q: &HermitianPsd, scaling: Scaling) -> Result<(f64, f64)> {
    let e = q.eigen()?;
    let c = match scaling {
        Scaling::Spectral => 2.0 / (e.max() + e.min()),
        Scaling::Trace => 1.0 / q.matrix().trace().re,
    };
    if !c.is_finite() || c <= 0.0 {
        return Err(Error::Domain(format!("no positive scaling constant for spectrum [{}, {}]", e.min(), e.max())));
    }
    let rho = (1.0 - c * e.min()).abs().max((1.0 - c * e.max()).abs());
    Ok((c, rho))
}

/// Neumann inverses `c * sum_{j<=d} (I - cQ)^j` for every `d` in `1..=d_max`.
pub fn poly_inverse_trajectory(q: &HermitianPsd, d_max: usize, arith: Arith, scaling: Scaling) -> Result<Vec<RawInverse>> {
    if d_max == 0 {
        return Err(Error::Invalid("polynomial degree must be at least 1".into()));
    }
    let n = q.dim();
    let (c, rho) = neumann_scaling(q, scaling)?;
    let start = flops::current();
    let qq = q.matrix().quantized(arith);
    flops::add((n * n) as u64);
    let t = ComplexMatrix::from_fn(n, n, |i, j| {
        let id = if i == j { 1.0 } else { 0.0 };
        arith.round_complex(Complex64::new(id, 0.0) - qq[(i, j)] * c)
    });
    let mut p = ComplexMatrix::identity(n).add(&t)?.quantized(arith);
    let mut out = Vec::with_capacity(d_max);
    for d in 1..=d_max {
        if d > 1 {
            let tp = matmul(&t, &p, arith)?;
            p = ComplexMatrix::identity(n).add(&tp)?.quantized(arith);
        }
        let spent = flops::current() - start + (n * n) as u64;
        out.push(RawInverse {
            order: d,
            matrix: p.scaled(c).quantized(arith),
            status: InversionStatus { flops: spent, diverged: rho >= 1.0, ..Default::default() },
        });
    }
    flops::add((n * n) as u64);
    Ok(out)
}

/// Neumann-series inverse of degree `d`, symmetrized.
pub fn poly_inverse(q: &HermitianPsd, d: usize, arith: Arith, scaling: Scaling) -> Result<(ComplexMatrix, InversionStatus)> {
    let raw = poly_inverse_trajectory(q, d, arith, scaling)?.pop().expect("d >= 1");
    Ok((raw.matrix.hermitian_part()?, raw.status))
}

/// Symmetrizes a raw inverse and floors its spectrum at [`INVERSE_FLOOR`].
pub fn finalize(raw: RawInverse) -> Result<(HermitianPsd, InversionStatus)> {
    let mut status = raw.status;
    let a = HermitianPsd::symmetrized(&raw.matrix)?;
    let e = a.eigen()?;
    status.floored_eigenvalues = e.values.iter().filter(|&&l| l < INVERSE_FLOOR).count();
    if status.floored_eigenvalues == 0 {
        return Ok((a, status));
    }
    let values = e.values.iter().map(|&l| l.max(INVERSE_FLOOR)).collect();
    Ok((HermitianPsd::from_eigen(Eigen { values, vectors: e.vectors.clone() }), status))
}

/// Exact FP64 inverse by Gauss-Jordan elimination.
pub fn exact_inverse(q: &HermitianPsd) -> Result<RawInverse> {
    let (m, f) = flops::measure(|| linalg::lu_inverse(q.matrix()));
    Ok(RawInverse { order: 0, matrix: m?, status: InversionStatus { flops: f, ..Default::default() } })
}

/// Dispatches on `spec.method`; the result is Hermitian with spectrum floored at [`INVERSE_FLOOR`].
pub fn approx_inverse(q: &HermitianPsd, spec: &InversionSpec) -> Result<(HermitianPsd, InversionStatus)> {
    let raw = match spec.method {
        Method::Exact => exact_inverse(q)?,
        Method::Cg(k) => cg_inverse_trajectory(q, k, spec.arith)?.pop().expect("k >= 1"),
        Method::Poly(d) => poly_inverse_trajectory(q, d, spec.arith, spec.scaling)?.pop().expect("d >= 1"),
    };
    finalize(raw)
}

/// Every order of `method`'s family up to its own order, finalized.
pub fn approx_inverse_trajectory(q: &HermitianPsd, spec: &InversionSpec) -> Result<Vec<(HermitianPsd, InversionStatus)>> {
    let raws = match spec.method {
        Method::Exact => vec![exact_inverse(q)?],
        Method::Cg(k) => cg_inverse_trajectory(q, k, spec.arith)?,
        Method::Poly(d) => poly_inverse_trajectory(q, d, spec.arith, spec.scaling)?,
    };
    raws.into_iter().map(finalize).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::matmul_adj;
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn random_spd(seed: u64, n: usize, shift: f64) -> HermitianPsd {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = ComplexMatrix::from_fn(n, n, |_, _| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
        let mut m = matmul_adj(&w, &w).unwrap();
        for i in 0..n {
            m[(i, i)] += c(shift);
        }
        HermitianPsd::symmetrized(&m).unwrap()
    }

    fn rel_err(a: &ComplexMatrix, b: &ComplexMatrix) -> f64 {
        a.sub(b).unwrap().frobenius_norm() / b.frobenius_norm()
    }

    #[test]
    fn parse_cli_strings() {
        let s = InversionSpec::parse("cg:4", "q15.16").unwrap();
        assert_eq!(s.method, Method::Cg(4));
        assert_eq!(s.profile(), ArithmeticProfile::Q15_16);
        assert_eq!("poly:6".parse::<Method>().unwrap(), Method::Poly(6));
        assert_eq!("spectral".parse::<Scaling>().unwrap(), Scaling::Spectral);
        assert_eq!("EXACT".parse::<Method>().unwrap(), Method::Exact);
        for bad in ["cg", "cg:0", "poly:x", "newton:3"] {
            assert!(bad.parse::<Method>().is_err(), "{bad}");
        }
        assert_eq!(s.to_string(), "cg:4@q15.16");
    }

    #[test]
    fn cg_identity_one_step() {
        let b = vec![Complex64::new(0.25, -1.0), c(3.0), Complex64::new(0.0, 2.0)];
        let out = cg_solve(&HermitianPsd::identity(3), &b, 1, Arith::FP64).unwrap();
        assert_eq!(out.x, b);
    }

    #[test]
    fn cg_two_distinct_eigenvalues() {
        let out = cg_solve(&HermitianPsd::diag(&[1.0, 2.0]), &[c(1.0), c(1.0)], 2, Arith::FP64).unwrap();
        assert!((out.x[0] - c(1.0)).norm() < 1e-12);
        assert!((out.x[1] - c(0.5)).norm() < 1e-12);
    }

    #[test]
    fn cg_matches_lu_on_random_spd() {
        let q = random_spd(3, 8, 0.5);
        let b: Vec<Complex64> = (0..8).map(|i| Complex64::new(i as f64, 1.0 - i as f64)).collect();
        let x = cg_solve(&q, &b, 8, Arith::FP64).unwrap().x;
        let inv = linalg::lu_inverse(q.matrix()).unwrap();
        let xo = inv.mul_vec(&b, Arith::FP64).unwrap();
        let num: f64 = x.iter().zip(&xo).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
        let den: f64 = xo.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        assert!(num / den < 1e-10, "{}", num / den);
    }

    #[test]
    fn cg_stagnation_is_flagged() {
        // curvature underflows: tiny Q entries in a coarse grid
        let q = HermitianPsd::diag(&[1e-6, 1e-6]);
        let arith = Arith::wide(ArithmeticProfile::Q15_16);
        let out = cg_solve(&q, &[c(1.0), c(0.0)], 3, arith).unwrap();
        assert_eq!(out.termination, CgTermination::Stagnated);
        assert_eq!(out.x, vec![c(0.0), c(0.0)]);
        let traj = cg_inverse_trajectory(&q, 2, arith).unwrap();
        assert_eq!(traj[0].status.stagnated_columns, 2);
    }

    #[test]
    fn cg_inverse_examples() {
        let (x, _) = cg_inverse(&HermitianPsd::identity(5), 3, Arith::FP64).unwrap();
        assert!(x.sub(&ComplexMatrix::identity(5)).unwrap().max_abs() < 1e-15);
        let q = random_spd(11, 12, 0.3);
        let (x, st) = cg_inverse(&q, 12, Arith::FP64).unwrap();
        let lu = linalg::lu_inverse(q.matrix()).unwrap();
        assert!(rel_err(&x, &lu) < 1e-8);
        assert_eq!(st.flops, 12 * (12 * (12 * 12 + 5 * 12) + 12));
    }

    #[test]
    fn cg_q7_16_error_floor_on_ill_conditioned_matrix() {
        let n = 4;
        let mut vals = vec![1.0; n];
        vals[0] = 1000.0;
        // rotate so the large eigenvalue is spread across entries
        let u = ComplexMatrix::from_fn(n, n, |i, j| {
            Complex64::from_polar(1.0 / (n as f64).sqrt(), 2.0 * std::f64::consts::PI * (i * j) as f64 / n as f64)
        });
        let m = matmul_adj(&matmul(&u, &ComplexMatrix::diag(&vals), Arith::FP64).unwrap(), &u).unwrap();
        let q = HermitianPsd::symmetrized(&m).unwrap();
        let (x, _) = cg_inverse(&q, 20, Arith::wide(ArithmeticProfile::Q7_16)).unwrap();
        let lu = linalg::lu_inverse(q.matrix()).unwrap();
        assert!(rel_err(&x, &lu) > 1e-2, "{}", rel_err(&x, &lu));
    }

    #[test]
    fn cg_trajectory_matches_independent_runs() {
        let q = random_spd(5, 6, 0.2);
        let arith = Arith::wide(ArithmeticProfile::Fp32);
        let traj = cg_inverse_trajectory(&q, 5, arith).unwrap();
        for k in 1..=5 {
            let (single, f) = flops::measure(|| cg_inverse_trajectory(&q, k, arith).unwrap().pop().unwrap());
            assert_eq!(single.matrix, traj[k - 1].matrix);
            assert_eq!(f, traj[k - 1].status.flops);
            assert_eq!(f, (6 * (k * (36 + 30) + 6)) as u64);
        }
    }

    #[test]
    fn cg_qnorm_error_is_monotone_in_fp64() {
        let q = random_spd(8, 10, 0.1);
        let b: Vec<Complex64> = (0..10).map(|i| Complex64::new(1.0, i as f64 * 0.1)).collect();
        let xs = linalg::lu_inverse(q.matrix()).unwrap().mul_vec(&b, Arith::FP64).unwrap();
        let mut prev = f64::INFINITY;
        for k in 1..=10 {
            let x = cg_solve(&q, &b, k, Arith::FP64).unwrap().x;
            let e: Vec<Complex64> = x.iter().zip(&xs).map(|(a, b)| a - b).collect();
            let qe = q.matrix().mul_vec(&e, Arith::FP64).unwrap();
            let err: f64 = e.iter().zip(&qe).map(|(a, b)| (a.conj() * b).re).sum::<f64>().sqrt();
            assert!(err <= prev * (1.0 + 1e-9) + 1e-13, "k={k}: {err} > {prev}");
            prev = err;
        }
    }

    #[test]
    fn poly_identity_any_degree() {
        for d in 1..5 {
            let (x, _) = poly_inverse(&HermitianPsd::identity(4), d, Arith::FP64, Scaling::Spectral).unwrap();
            assert!(x.sub(&ComplexMatrix::identity(4)).unwrap().max_abs() < 1e-15);
        }
    }

    #[test]
    fn poly_diagonal_geometric_bound() {
        let (x, _) = poly_inverse(&HermitianPsd::diag(&[1.0, 3.0]), 4, Arith::FP64, Scaling::Spectral).unwrap();
        let (rho, cc) = (0.5f64, 0.5);
        let bound = rho.powi(5) / (1.0 - rho) * cc;
        assert!((x[(0, 0)] - c(1.0)).norm() <= bound);
        assert!((x[(1, 1)] - c(1.0 / 3.0)).norm() <= bound);
        assert!(x[(0, 1)].norm() < 1e-15);
    }

    #[test]
    fn poly_relative_spectral_error_bound() {
        for kappa in [2.0, 10.0, 50.0] {
            let vals = [1.0, 0.5 * (1.0 + kappa), kappa];
            let rho = (kappa - 1.0) / (kappa + 1.0);
            for d in [2usize, 5, 9] {
                let (x, _) = poly_inverse(&HermitianPsd::diag(&vals), d, Arith::FP64, Scaling::Spectral).unwrap();
                for (i, &l) in vals.iter().enumerate() {
                    let rel = (x[(i, i)].re * l - 1.0).abs();
                    assert!(rel <= rho.powi(d as i32 + 1) / (1.0 - rho) + 1e-12);
                }
            }
        }
    }

    #[test]
    fn poly_flops_and_trace_scaling() {
        let q = random_spd(2, 8, 1.0);
        for d in 1..=4 {
            let ((_, st), f) = flops::measure(|| poly_inverse(&q, d, Arith::FP64, Scaling::Spectral).unwrap());
            assert_eq!(f, st.flops);
            assert_eq!(st.flops, ((d - 1) * 512 + 2 * 64) as u64);
        }
        let (c_tr, rho) = neumann_scaling(&q, Scaling::Trace).unwrap();
        assert!(rho < 1.0);
        assert!((c_tr * q.matrix().trace().re - 1.0).abs() < 1e-12);
    }

    #[test]
    fn poly_error_grows_with_condition_number() {
        let mut prev = 0.0;
        for beta in [1.0, 10.0, 100.0, 1000.0] {
            let n = 6;
            let u: Vec<Complex64> = (0..n).map(|i| Complex64::from_polar(1.0 / (n as f64).sqrt(), i as f64)).collect();
            let mut m = ComplexMatrix::identity(n);
            for i in 0..n {
                for j in 0..n {
                    m[(i, j)] += u[i] * u[j].conj() * beta;
                }
            }
            let q = HermitianPsd::symmetrized(&m).unwrap();
            let (x, _) = poly_inverse(&q, 5, Arith::FP64, Scaling::Spectral).unwrap();
            let err = rel_err(&x, &linalg::lu_inverse(&m).unwrap());
            assert!(err >= prev);
            prev = err;
        }
    }

    #[test]
    fn approx_inverse_dispatch() {
        let (a, st) = approx_inverse(&HermitianPsd::diag(&[2.0]), &InversionSpec::exact()).unwrap();
        assert!((a.matrix()[(0, 0)] - c(0.5)).norm() < 1e-15);
        assert_eq!(st.flops, 1);
        let q = random_spd(9, 10, 0.5);
        let (cg, _) = approx_inverse(&q, &InversionSpec::new(Method::Cg(10), ArithmeticProfile::Fp64)).unwrap();
        let (ex, _) = approx_inverse(&q, &InversionSpec::exact()).unwrap();
        assert!(rel_err(cg.matrix(), ex.matrix()) < 1e-8);
        let (p, _) = approx_inverse(&HermitianPsd::identity(3), &InversionSpec::new(Method::Poly(7), ArithmeticProfile::Q7_16)).unwrap();
        assert!(p.matrix().sub(&ComplexMatrix::identity(3)).unwrap().max_abs() < 1e-15);
    }

    #[test]
    fn finalize_floors_indefinite_output() {
        let raw = RawInverse { order: 1, matrix: ComplexMatrix::diag(&[1.0, -0.5]), status: InversionStatus::default() };
        let (a, st) = finalize(raw).unwrap();
        assert_eq!(st.floored_eigenvalues, 1);
        assert!(a.eigen().unwrap().min() >= INVERSE_FLOOR);
        assert_eq!(st.flags(), "floored:1");
    }
}
