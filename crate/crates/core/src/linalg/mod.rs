//! Dense complex matrices, profile-aware products, and FP64 reference
//! decompositions (Hermitian eigen, PSD square roots, truncated SVD).

mod eig;
pub mod io;

use std::ops::{Index, IndexMut};
use std::sync::{Arc, OnceLock};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::arith::{AccumulatorPolicy, Arith, ArithmeticProfile};
use crate::error::{Error, Result};
use crate::flops;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Relative Hermitian-ness tolerance accepted by [`HermitianPsd::from_matrix`].
pub const HERMITIAN_TOL: f64 = 1e-12;
/// Relative negative-eigenvalue tolerance for PSD checks.
pub const PSD_TOL: f64 = 1e-10;

/// Row-major dense complex matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
    /// Profile of the last kernel that produced this matrix.
    #[serde(default = "fp64")]
    profile: ArithmeticProfile,
}

fn fp64() -> ArithmeticProfile {
    ArithmeticProfile::Fp64
}

impl ComplexMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![ZERO; rows * cols], profile: ArithmeticProfile::Fp64 }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = ONE;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data, profile: ArithmeticProfile::Fp64 }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Dimension(format!("{} entries for a {rows}x{cols} matrix", data.len())));
        }
        Ok(Self { rows, cols, data, profile: ArithmeticProfile::Fp64 })
    }

    pub fn from_rows(rows: &[Vec<Complex64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Dimension("ragged rows".into()));
        }
        Self::from_vec(rows.len(), cols, rows.concat())
    }

    pub fn from_real_rows(rows: &[&[f64]]) -> Result<Self> {
        let rows: Vec<Vec<Complex64>> = rows.iter().map(|r| r.iter().map(|&x| Complex64::new(x, 0.0)).collect()).collect();
        Self::from_rows(&rows)
    }

    pub fn column_vector(v: &[Complex64]) -> Self {
        Self { rows: v.len(), cols: 1, data: v.to_vec(), profile: ArithmeticProfile::Fp64 }
    }

    pub fn diag(values: &[f64]) -> Self {
        let n = values.len();
        let mut m = Self::zeros(n, n);
        for (i, &v) in values.iter().enumerate() {
            m.data[i * n + i] = Complex64::new(v, 0.0);
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn profile(&self) -> ArithmeticProfile {
        self.profile
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn row(&self, i: usize) -> &[Complex64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<Complex64> {
        (0..self.rows).map(|i| self.data[i * self.cols + j]).collect()
    }

    pub fn set_column(&mut self, j: usize, v: &[Complex64]) {
        for (i, &x) in v.iter().enumerate().take(self.rows) {
            self.data[i * self.cols + j] = x;
        }
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self.data[j * self.cols + i].conj())
    }

    pub fn scaled(&self, s: f64) -> Self {
        self.map(|z| z * s)
    }

    pub fn map(&self, f: impl Fn(Complex64) -> Complex64) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&z| f(z)).collect(), profile: self.profile }
    }

    fn zip_with(&self, other: &Self, what: &str, f: impl Fn(Complex64, Complex64) -> Complex64) -> Result<Self> {
        if self.shape() != other.shape() {
            return Err(Error::Dimension(format!("{what} of {:?} and {:?}", self.shape(), other.shape())));
        }
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect();
        Ok(Self { rows: self.rows, cols: self.cols, data, profile: ArithmeticProfile::Fp64 })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, "sum", |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, "difference", |a, b| a - b)
    }

    /// `self + s * other`.
    pub fn add_scaled(&self, other: &Self, s: f64) -> Result<Self> {
        self.zip_with(other, "sum", |a, b| a + b * s)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, z| m.max(z.norm()))
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.rows.min(self.cols)).map(|i| self.data[i * self.cols + i]).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// Rounds every entry onto the grid of `arith` and tags the result.
    pub fn quantized(&self, arith: Arith) -> Self {
        let mut m = self.map(|z| arith.round_complex(z));
        m.profile = arith.profile;
        m
    }

    /// `(A + A^H) / 2`.
    pub fn hermitian_part(&self) -> Result<Self> {
        if !self.is_square() {
            return Err(Error::Dimension(format!("hermitian part of {:?}", self.shape())));
        }
        let n = self.rows;
        Ok(Self::from_fn(n, n, |i, j| (self.data[i * n + j] + self.data[j * n + i].conj()) * 0.5))
    }

    /// Matrix-vector product under `arith`.
    pub fn mul_vec(&self, x: &[Complex64], arith: Arith) -> Result<Vec<Complex64>> {
        if x.len() != self.cols {
            return Err(Error::Dimension(format!("{:?} times vector of {}", self.shape(), x.len())));
        }
        flops::add((self.rows * self.cols) as u64);
        Ok((0..self.rows).map(|i| dot_row(self.row(i), x, arith)).collect())
    }
}

/// `sum(a[k] * b[k])` under `arith`.
#[inline]
pub(crate) fn dot_row(a: &[Complex64], b: &[Complex64], arith: Arith) -> Complex64 {
    match (arith.profile, arith.accumulator) {
        (ArithmeticProfile::Fp64, _) | (_, AccumulatorPolicy::Wide) => {
            let s = a.iter().zip(b).fold(ZERO, |s, (&x, &y)| s + x * y);
            arith.round_complex(s)
        }
        (_, AccumulatorPolicy::Narrow) => a.iter().zip(b).fold(ZERO, |s, (&x, &y)| arith.mac(s, x, y)),
    }
}

/// `sum(conj(a[k]) * b[k])` under `arith`.
pub(crate) fn dotc(a: &[Complex64], b: &[Complex64], arith: Arith) -> Complex64 {
    flops::add(a.len() as u64);
    match (arith.profile, arith.accumulator) {
        (ArithmeticProfile::Fp64, _) | (_, AccumulatorPolicy::Wide) => {
            let s = a.iter().zip(b).fold(ZERO, |s, (&x, &y)| s + x.conj() * y);
            arith.round_complex(s)
        }
        (_, AccumulatorPolicy::Narrow) => a.iter().zip(b).fold(ZERO, |s, (&x, &y)| arith.mac(s, x.conj(), y)),
    }
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = Complex64;
    fn index(&self, (i, j): (usize, usize)) -> &Complex64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for ComplexMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Complex64 {
        &mut self.data[i * self.cols + j]
    }
}

/// `A * B` with every entry produced by an inner product under `arith`.
///
/// Adds `rows * cols * inner` to the flop tally.
pub fn matmul(a: &ComplexMatrix, b: &ComplexMatrix, arith: Arith) -> Result<ComplexMatrix> {
    if a.cols != b.rows {
        return Err(Error::Dimension(format!("{:?} times {:?}", a.shape(), b.shape())));
    }
    let (n, m, inner) = (a.rows, b.cols, a.cols);
    flops::add((n * m * inner) as u64);
    let mut out = ComplexMatrix::zeros(n, m);
    out.profile = arith.profile;
    let narrow = arith.accumulator == AccumulatorPolicy::Narrow && !arith.profile.is_fp64();
    for i in 0..n {
        let acc = &mut out.data[i * m..(i + 1) * m];
        for k in 0..inner {
            let aik = a.data[i * inner + k];
            let brow = &b.data[k * m..(k + 1) * m];
            if narrow {
                for (c, &bkj) in acc.iter_mut().zip(brow) {
                    *c = arith.mac(*c, aik, bkj);
                }
            } else {
                for (c, &bkj) in acc.iter_mut().zip(brow) {
                    *c += aik * bkj;
                }
            }
        }
        if !narrow && !arith.profile.is_fp64() {
            for c in acc.iter_mut() {
                *c = arith.round_complex(*c);
            }
        }
    }
    Ok(out)
}

/// `A * B^H` in FP64.
pub fn matmul_adj(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<ComplexMatrix> {
    if a.cols != b.cols {
        return Err(Error::Dimension(format!("{:?} times adjoint of {:?}", a.shape(), b.shape())));
    }
    flops::add((a.rows * b.rows * a.cols) as u64);
    Ok(ComplexMatrix::from_fn(a.rows, b.rows, |i, j| {
        a.row(i).iter().zip(b.row(j)).fold(ZERO, |s, (&x, &y)| s + x * y.conj())
    }))
}

/// Eigenpairs of a Hermitian matrix: values descending, vectors as columns.
#[derive(Debug, Clone)]
pub struct Eigen {
    pub values: Vec<f64>,
    pub vectors: ComplexMatrix,
}

impl Eigen {
    pub fn max(&self) -> f64 {
        self.values.first().copied().unwrap_or(0.0)
    }

    pub fn min(&self) -> f64 {
        self.values.last().copied().unwrap_or(0.0)
    }

    /// `V f(Λ) V^H`.
    pub fn map_spectrum(&self, f: impl Fn(f64) -> f64) -> ComplexMatrix {
        let n = self.vectors.rows();
        let k = self.values.len();
        let w: Vec<f64> = self.values.iter().map(|&l| f(l)).collect();
        let v = &self.vectors;
        flops::add((n * n * k) as u64);
        let mut out = ComplexMatrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let mut s = ZERO;
                for (c, &wc) in w.iter().enumerate() {
                    if wc != 0.0 {
                        s += v[(i, c)] * v[(j, c)].conj() * wc;
                    }
                }
                out[(i, j)] = s;
                out[(j, i)] = s.conj();
            }
            out[(i, i)].im = 0.0;
        }
        out
    }
}

/// A Hermitian (positive semidefinite) matrix with lazily cached eigenpairs.
#[derive(Debug, Clone)]
pub struct HermitianPsd {
    m: ComplexMatrix,
    eig: OnceLock<Arc<Eigen>>,
}

impl HermitianPsd {
    /// Checks Hermitian symmetry to [`HERMITIAN_TOL`] and symmetrizes.
    pub fn from_matrix(m: ComplexMatrix) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::Dimension(format!("Hermitian matrix must be square, got {:?}", m.shape())));
        }
        let n = m.rows;
        let mut asym: f64 = 0.0;
        for i in 0..n {
            for j in i..n {
                asym = asym.max((m[(i, j)] - m[(j, i)].conj()).norm());
            }
        }
        let tolerance = HERMITIAN_TOL * m.max_abs();
        if asym > tolerance {
            return Err(Error::NotHermitian { asymmetry: asym, tolerance });
        }
        Self::symmetrized(&m)
    }

    /// Takes the Hermitian part of an arbitrary square matrix.
    pub fn symmetrized(m: &ComplexMatrix) -> Result<Self> {
        let mut h = m.hermitian_part()?;
        h.profile = m.profile;
        if !h.is_finite() {
            return Err(Error::Domain("non-finite matrix entries".into()));
        }
        Ok(Self { m: h, eig: OnceLock::new() })
    }

    pub fn identity(n: usize) -> Self {
        Self { m: ComplexMatrix::identity(n), eig: OnceLock::new() }
    }

    pub fn diag(values: &[f64]) -> Self {
        Self { m: ComplexMatrix::diag(values), eig: OnceLock::new() }
    }

    /// Builds `V diag(values) V^H` and keeps the given decomposition as its cache.
    pub fn from_eigen(eigen: Eigen) -> Self {
        let m = eigen.map_spectrum(|l| l);
        let cell = OnceLock::new();
        let _ = cell.set(Arc::new(eigen));
        Self { m, eig: cell }
    }

    pub fn dim(&self) -> usize {
        self.m.rows
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.m
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.m
    }

    /// Cached FP64 eigendecomposition.
    pub fn eigen(&self) -> Result<&Eigen> {
        if let Some(e) = self.eig.get() {
            return Ok(e);
        }
        let e = hermitian_eig(self)?;
        Ok(self.eig.get_or_init(|| Arc::new(e)))
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        Ok(Self { m: self.m.add(&other.m)?, eig: OnceLock::new() })
    }

    pub fn add_scaled(&self, other: &Self, s: f64) -> Result<Self> {
        Ok(Self { m: self.m.add_scaled(&other.m, s)?, eig: OnceLock::new() })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        Self::symmetrized(&self.m.sub(&other.m)?)
    }

    /// Rejects matrices with eigenvalues below `-PSD_TOL * λ_max`.
    pub fn check_psd(&self) -> Result<()> {
        let e = self.eigen()?;
        let floor = -PSD_TOL * e.max().abs().max(f64::MIN_POSITIVE);
        if e.min() < floor {
            return Err(Error::NotPsd { eigenvalue: e.min() });
        }
        Ok(())
    }
}

/// FP64 eigendecomposition by cyclic Jacobi rotations.
///
/// Eigenvalues are sorted descending; each eigenvector's first significant
/// entry is made real and positive.
pub fn hermitian_eig(a: &HermitianPsd) -> Result<Eigen> {
    let n = a.dim();
    if n > 4096 {
        return Err(Error::Invalid(format!("eigendecomposition limited to dimension 4096, got {n}")));
    }
    let (values, vectors) = eig::jacobi(a.matrix().data(), n);
    Ok(Eigen { values, vectors: ComplexMatrix::from_vec(n, n, vectors)? })
}

/// Principal square root of a PSD matrix.
pub fn sqrtm_psd(a: &HermitianPsd) -> Result<HermitianPsd> {
    a.check_psd()?;
    let e = a.eigen()?;
    Ok(HermitianPsd::from_eigen(Eigen {
        values: e.values.iter().map(|&l| l.max(0.0).sqrt()).collect(),
        vectors: e.vectors.clone(),
    }))
}

/// Inverse square root with eigenvalues clamped below at `eig_floor`
/// (default `1e-6 * λ_max`).
pub fn invsqrtm_psd(a: &HermitianPsd, eig_floor: Option<f64>) -> Result<HermitianPsd> {
    a.check_psd()?;
    let e = a.eigen()?;
    let floor = eig_floor.unwrap_or(1e-6 * e.max());
    if floor <= 0.0 {
        return Err(Error::Singular);
    }
    let mut values: Vec<f64> = e.values.iter().map(|&l| 1.0 / l.max(floor).sqrt()).collect();
    let mut vectors = e.vectors.clone();
    // keep descending order for the cache
    values.reverse();
    let n = vectors.rows();
    let cols: Vec<Vec<Complex64>> = (0..n).rev().map(|j| e.vectors.column(j)).collect();
    for (j, c) in cols.iter().enumerate() {
        vectors.set_column(j, c);
    }
    Ok(HermitianPsd::from_eigen(Eigen { values, vectors }))
}

/// Thin factor `C` (rank x dim) with `C^H C = A`: rows are `sqrt(λ_k) u_k^H`
/// for eigenvalues above `rel_tol * λ_max`.
pub fn psd_factor(a: &HermitianPsd, rel_tol: f64) -> Result<ComplexMatrix> {
    let e = a.eigen()?;
    let n = a.dim();
    let cut = rel_tol * e.max();
    let rank = e.values.iter().take_while(|&&l| l > cut && l > 0.0).count().max(1);
    Ok(ComplexMatrix::from_fn(rank, n, |k, j| e.vectors[(j, k)].conj() * e.values[k].max(0.0).sqrt()))
}

/// The `r` dominant right singular vectors of `b`, returned as the rows of
/// `V_r^H` (an `r x cols` matrix).
pub fn top_r_right_singular(b: &ComplexMatrix, r: usize) -> Result<ComplexMatrix> {
    let cols = b.cols();
    if r == 0 || r > cols {
        return Err(Error::Invalid(format!("rank {r} out of range 1..={cols}")));
    }
    if r <= b.rows() && b.rows() < cols {
        // thin route: eigenvectors of B B^H mapped through B^H
        let gram = HermitianPsd::symmetrized(&matmul_adj(b, b)?)?;
        let e = gram.eigen()?;
        let smax = e.max().max(0.0).sqrt();
        if e.values[r - 1] > (1e-12 * smax).powi(2) && smax > 0.0 {
            let bh = b.adjoint();
            let mut out = ComplexMatrix::zeros(r, cols);
            for k in 0..r {
                let u = e.vectors.column(k);
                let sigma = e.values[k].sqrt();
                let mut v = bh.mul_vec(&u, Arith::FP64)?;
                v.iter_mut().for_each(|z| *z /= sigma);
                normalize_phase(&mut v);
                for (j, z) in v.iter().enumerate() {
                    out[(k, j)] = z.conj();
                }
            }
            return Ok(out);
        }
    }
    let gram = HermitianPsd::symmetrized(&matmul(&b.adjoint(), b, Arith::FP64)?)?;
    let e = gram.eigen()?;
    Ok(ComplexMatrix::from_fn(r, cols, |k, j| e.vectors[(j, k)].conj()))
}

/// `λ_max / λ_min`; infinite when `λ_min <= 0`.
pub fn condition_number(a: &HermitianPsd) -> Result<f64> {
    let e = a.eigen()?;
    Ok(if e.min() <= 0.0 { f64::INFINITY } else { e.max() / e.min() })
}

/// FP64 inverse by Gauss-Jordan elimination with partial pivoting.
pub fn lu_inverse(a: &ComplexMatrix) -> Result<ComplexMatrix> {
    if !a.is_square() {
        return Err(Error::Dimension(format!("inverse of {:?}", a.shape())));
    }
    let n = a.rows;
    flops::add((n * n * n) as u64);
    let mut m = a.clone();
    let mut inv = ComplexMatrix::identity(n);
    for col in 0..n {
        let piv = (col..n).max_by(|&x, &y| m[(x, col)].norm().total_cmp(&m[(y, col)].norm())).unwrap();
        if m[(piv, col)].norm() == 0.0 {
            return Err(Error::Singular);
        }
        if piv != col {
            for j in 0..n {
                m.data.swap(piv * n + j, col * n + j);
                inv.data.swap(piv * n + j, col * n + j);
            }
        }
        let d = ONE / m[(col, col)];
        for j in 0..n {
            m[(col, j)] *= d;
            inv[(col, j)] *= d;
        }
        for i in 0..n {
            if i == col {
                continue;
            }
            let f = m[(i, col)];
            if f == ZERO {
                continue;
            }
            for j in 0..n {
                let (mc, ic) = (m[(col, j)], inv[(col, j)]);
                m[(i, j)] -= f * mc;
                inv[(i, j)] -= f * ic;
            }
        }
    }
    Ok(inv)
}

/// Largest principal angle (radians) between the row spaces of `a` and `b`.
pub fn row_space_angle(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<f64> {
    if a.cols() != b.cols() {
        return Err(Error::Dimension(format!("row spaces of {:?} and {:?}", a.shape(), b.shape())));
    }
    let ua = orthonormal_rows(a)?;
    let ub = orthonormal_rows(b)?;
    // residual of b's basis after projecting onto a's row space
    let coeff = matmul_adj(&ub, &ua)?;
    let resid = ub.sub(&matmul(&coeff, &ua, Arith::FP64)?)?;
    let mut s2: f64 = HermitianPsd::symmetrized(&matmul_adj(&resid, &resid)?)?.eigen()?.max();
    if ua.rows() != ub.rows() {
        // unequal dimensions: measure the smaller space against the larger
        s2 = s2.min(1.0);
    }
    Ok(s2.max(0.0).sqrt().min(1.0).asin())
}

/// Orthonormal basis of the row space by twice-applied modified Gram-Schmidt.
pub fn orthonormal_rows(a: &ComplexMatrix) -> Result<ComplexMatrix> {
    let scale = a.max_abs();
    let mut basis: Vec<Vec<Complex64>> = Vec::with_capacity(a.rows());
    for i in 0..a.rows() {
        let mut v = a.row(i).to_vec();
        for _ in 0..2 {
            for q in &basis {
                let c: Complex64 = q.iter().zip(&v).map(|(x, y)| x.conj() * y).sum();
                v.iter_mut().zip(q).for_each(|(y, x)| *y -= c * x);
            }
        }
        let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm <= 1e-12 * scale * (a.cols() as f64).sqrt() || norm == 0.0 {
            return Err(Error::Invalid(format!("row {i} is linearly dependent")));
        }
        v.iter_mut().for_each(|z| *z /= norm);
        basis.push(v);
    }
    ComplexMatrix::from_rows(&basis)
}

/// Rotates `v` so its first significant entry is real and positive.
pub(crate) fn normalize_phase(v: &mut [Complex64]) {
    let max = v.iter().fold(0.0f64, |m, z| m.max(z.norm()));
    if let Some(first) = v.iter().find(|z| z.norm() > 1e-10 * max) {
        let ph = first.conj() / first.norm();
        v.iter_mut().for_each(|z| *z *= ph);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random_matrix(rng: &mut ChaCha8Rng, r: usize, k: usize) -> ComplexMatrix {
        ComplexMatrix::from_fn(r, k, |_, _| c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
    }

    fn random_spd(rng: &mut ChaCha8Rng, n: usize) -> HermitianPsd {
        let w = random_matrix(rng, n, n);
        let m = matmul_adj(&w, &w).unwrap().add(&ComplexMatrix::identity(n)).unwrap();
        HermitianPsd::symmetrized(&m).unwrap()
    }

    #[test]
    fn matmul_identity_and_permutation() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random_matrix(&mut rng, 3, 3).quantized(Arith::wide(ArithmeticProfile::Q15_16));
        for p in [ArithmeticProfile::Fp64, ArithmeticProfile::Fp32, ArithmeticProfile::Q15_16] {
            let prod = matmul(&a, &ComplexMatrix::identity(3), Arith::wide(p)).unwrap();
            assert_eq!(prod.data(), a.data());
            let prod = matmul(&a, &ComplexMatrix::identity(3), Arith::narrow(p)).unwrap();
            assert_eq!(prod.data(), a.data());
        }
        let perm = ComplexMatrix::from_real_rows(&[&[0.0, 1.0], &[1.0, 0.0]]).unwrap();
        let v = ComplexMatrix::column_vector(&[c(1.0, 2.0), c(-3.0, 0.5)]);
        let out = matmul(&perm, &v, Arith::FP64).unwrap();
        assert_eq!(out.column(0), vec![c(-3.0, 0.5), c(1.0, 2.0)]);
        assert!(matmul(&perm, &ComplexMatrix::zeros(3, 1), Arith::FP64).is_err());
    }

    #[test]
    fn matmul_matches_triple_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = random_matrix(&mut rng, 4, 4);
        let b = random_matrix(&mut rng, 4, 4);
        let got = matmul(&a, &b, Arith::FP64).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let mut s = c(0.0, 0.0);
                for k in 0..4 {
                    s += a[(i, k)] * b[(k, j)];
                }
                assert!((got[(i, j)] - s).norm() <= 1e-12 * s.norm().max(1.0));
            }
        }
    }

    #[test]
    fn matmul_counts_n_cubed() {
        let a = ComplexMatrix::identity(7);
        let (_, n) = flops::measure(|| matmul(&a, &a, Arith::FP64).unwrap());
        assert_eq!(n, 343);
    }

    #[test]
    fn eig_of_diagonal() {
        let e = HermitianPsd::diag(&[3.0, 1.0]).eigen().unwrap().clone();
        assert_eq!(e.values, vec![3.0, 1.0]);
        assert_eq!(e.vectors, ComplexMatrix::identity(2));
    }

    #[test]
    fn eig_rank_one_update() {
        let n = 6;
        let h: Vec<Complex64> = (0..n).map(|k| Complex64::from_polar(1.0, 0.7 * k as f64)).collect();
        let hm = ComplexMatrix::column_vector(&h);
        let a = HermitianPsd::symmetrized(&matmul_adj(&hm, &hm).unwrap().add(&ComplexMatrix::identity(n)).unwrap())
            .unwrap();
        let e = a.eigen().unwrap();
        assert!((e.values[0] - (1.0 + n as f64)).abs() < 1e-12);
        for &l in &e.values[1..] {
            assert!((l - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn eig_residual_and_orthonormality() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in [1, 2, 5, 17, 40] {
            let a = random_spd(&mut rng, n);
            let e = a.eigen().unwrap();
            let av = matmul(a.matrix(), &e.vectors, Arith::FP64).unwrap();
            let vl = matmul(&e.vectors, &ComplexMatrix::diag(&e.values), Arith::FP64).unwrap();
            assert!(av.sub(&vl).unwrap().frobenius_norm() <= 1e-9 * a.matrix().frobenius_norm());
            let gram = matmul(&e.vectors.adjoint(), &e.vectors, Arith::FP64).unwrap();
            assert!(gram.sub(&ComplexMatrix::identity(n)).unwrap().max_abs() < 1e-8);
            assert!(e.values.windows(2).all(|w| w[0] >= w[1]));
            let back = HermitianPsd::from_eigen(e.clone());
            assert!(back.matrix().sub(a.matrix()).unwrap().frobenius_norm() <= 1e-9 * a.matrix().frobenius_norm());
        }
    }

    #[test]
    fn rejects_non_hermitian() {
        let m = ComplexMatrix::from_real_rows(&[&[1.0, 2.0], &[0.0, 1.0]]).unwrap();
        assert!(matches!(HermitianPsd::from_matrix(m), Err(Error::NotHermitian { .. })));
    }

    #[test]
    fn square_roots() {
        let i = HermitianPsd::identity(3);
        assert!(sqrtm_psd(&i).unwrap().matrix().sub(i.matrix()).unwrap().max_abs() < 1e-15);
        let s = sqrtm_psd(&HermitianPsd::diag(&[4.0, 9.0])).unwrap();
        assert!(s.matrix().sub(&ComplexMatrix::diag(&[2.0, 3.0])).unwrap().max_abs() < 1e-15);

        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let q = random_spd(&mut rng, 8);
        let w = invsqrtm_psd(&q, None).unwrap();
        let prod = matmul(&matmul(w.matrix(), q.matrix(), Arith::FP64).unwrap(), w.matrix(), Arith::FP64).unwrap();
        assert!(prod.sub(&ComplexMatrix::identity(8)).unwrap().max_abs() < 1e-8);
        let r = sqrtm_psd(&q).unwrap();
        let rr = matmul(r.matrix(), r.matrix(), Arith::FP64).unwrap();
        assert!(rr.sub(q.matrix()).unwrap().frobenius_norm() <= 1e-8 * q.matrix().frobenius_norm());

        let indefinite = HermitianPsd::diag(&[1.0, -0.5]);
        assert!(matches!(sqrtm_psd(&indefinite), Err(Error::NotPsd { .. })));
    }

    #[test]
    fn singular_vectors_of_diagonal() {
        let b = ComplexMatrix::diag(&[3.0, 1.0, 2.0]);
        let v = top_r_right_singular(&b, 2).unwrap();
        let expect = ComplexMatrix::from_real_rows(&[&[1.0, 0.0, 0.0], &[0.0, 0.0, 1.0]]).unwrap();
        assert!(v.sub(&expect).unwrap().max_abs() < 1e-12);
        assert!(top_r_right_singular(&b, 0).is_err());
        assert!(top_r_right_singular(&b, 4).is_err());
    }

    #[test]
    fn singular_vectors_full_selection_unitary() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let u = orthonormal_rows(&random_matrix(&mut rng, 4, 4)).unwrap();
        let v = top_r_right_singular(&u, 4).unwrap();
        let gram = matmul_adj(&v, &v).unwrap();
        assert!(gram.sub(&ComplexMatrix::identity(4)).unwrap().max_abs() < 1e-10);
    }

    #[test]
    fn thin_route_matches_gram_route() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let b = random_matrix(&mut rng, 3, 9);
        let thin = top_r_right_singular(&b, 2).unwrap();
        let tall = ComplexMatrix::from_fn(9, 9, |i, j| if i < 3 { b[(i, j)] } else { c(0.0, 0.0) });
        let full = top_r_right_singular(&tall, 2).unwrap();
        assert!(row_space_angle(&thin, &full).unwrap() < 1e-8);
    }

    #[test]
    fn condition_numbers() {
        assert_eq!(condition_number(&HermitianPsd::identity(4)).unwrap(), 1.0);
        assert!((condition_number(&HermitianPsd::diag(&[100.0, 1.0])).unwrap() - 100.0).abs() < 1e-12);
        let u: Vec<Complex64> = (0..5).map(|k| Complex64::from_polar(1.0 / 5f64.sqrt(), k as f64)).collect();
        let um = ComplexMatrix::column_vector(&u);
        let q = ComplexMatrix::identity(5).add_scaled(&matmul_adj(&um, &um).unwrap(), 1000.0).unwrap();
        let k = condition_number(&HermitianPsd::symmetrized(&q).unwrap()).unwrap();
        assert!((k - 1001.0).abs() < 1e-8);
        assert_eq!(condition_number(&HermitianPsd::diag(&[1.0, 0.0])).unwrap(), f64::INFINITY);
    }

    #[test]
    fn lu_inverse_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = random_matrix(&mut rng, 6, 6);
        let inv = lu_inverse(&a).unwrap();
        let prod = matmul(&a, &inv, Arith::FP64).unwrap();
        assert!(prod.sub(&ComplexMatrix::identity(6)).unwrap().max_abs() < 1e-10);
        assert!(matches!(lu_inverse(&ComplexMatrix::zeros(2, 2)), Err(Error::Singular)));
    }

    #[test]
    fn row_space_angles() {
        let a = ComplexMatrix::from_real_rows(&[&[1.0, 0.0, 0.0]]).unwrap();
        let b = ComplexMatrix::from_real_rows(&[&[1.0, 1.0, 0.0]]).unwrap();
        assert!((row_space_angle(&a, &b).unwrap() - std::f64::consts::FRAC_PI_4).abs() < 1e-12);
        assert!(row_space_angle(&a, &a.scaled(-3.0)).unwrap() < 1e-15);
    }
}
