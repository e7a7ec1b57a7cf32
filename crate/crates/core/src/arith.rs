//! Numeric-precision regimes and the scalar kernels that run under them.
//!
//! Fixed-point values are carried as `f64` constrained to a `2^-f` grid, so a
//! single matrix kernel serves every profile. Integer arithmetic is used only
//! where the product of two grid values can exceed the 53-bit `f64` mantissa.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A numeric-precision regime.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum ArithmeticProfile {
    Fp64,
    Fp32,
    /// Signed `Qm.f`: one sign bit, `int_bits` integer bits and `frac_bits` fractional bits.
    Fixed { int_bits: u32, frac_bits: u32 },
}

/// How inner products accumulate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AccumulatorPolicy {
    /// Products and sums in `f64`, one quantization of the result.
    #[default]
    Wide,
    /// Quantize after every multiply and every add.
    Narrow,
}

/// A profile together with the accumulator policy of its MAC units.
///
/// Serializes as `"<profile>"` or `"<profile>/narrow"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Arith {
    pub profile: ArithmeticProfile,
    pub accumulator: AccumulatorPolicy,
}

impl ArithmeticProfile {
    pub const Q15_16: Self = Self::Fixed { int_bits: 15, frac_bits: 16 };
    pub const Q7_16: Self = Self::Fixed { int_bits: 7, frac_bits: 16 };

    /// Builds a fixed-point profile, rejecting formats that do not fit an `f64` mantissa.
    pub fn fixed(int_bits: u32, frac_bits: u32) -> Result<Self> {
        if int_bits == 0 || frac_bits == 0 || int_bits + frac_bits > 52 {
            return Err(Error::Config(format!("unsupported fixed-point format q{int_bits}.{frac_bits}")));
        }
        Ok(Self::Fixed { int_bits, frac_bits })
    }

    pub fn is_fp64(self) -> bool {
        matches!(self, Self::Fp64)
    }

    /// Smallest and largest representable value; infinite for floating point.
    pub fn range(self) -> (f64, f64) {
        match self {
            Self::Fp64 => (f64::NEG_INFINITY, f64::INFINITY),
            Self::Fp32 => (-(f32::MAX as f64), f32::MAX as f64),
            Self::Fixed { int_bits, frac_bits } => {
                let hi = 2f64.powi(int_bits as i32);
                (-hi, hi - 2f64.powi(-(frac_bits as i32)))
            }
        }
    }

    /// Grid spacing of a fixed-point format.
    pub fn resolution(self) -> Option<f64> {
        match self {
            Self::Fixed { frac_bits, .. } => Some(2f64.powi(-(frac_bits as i32))),
            _ => None,
        }
    }

    /// Checked quantization: rejects non-finite input.
    pub fn quantize(self, x: f64) -> Result<f64> {
        if !x.is_finite() {
            return Err(Error::Domain(format!("cannot quantize non-finite value {x}")));
        }
        Ok(self.round(x))
    }

    /// Kernel-level quantization. Never fails: fixed point saturates (NaN maps to 0)
    /// and floating point lets overflow surface as infinity.
    #[inline]
    pub fn round(self, x: f64) -> f64 {
        match self {
            Self::Fp64 => x,
            Self::Fp32 => x as f32 as f64,
            Self::Fixed { int_bits, frac_bits } => {
                if x.is_nan() {
                    return 0.0;
                }
                let scale = pow2(frac_bits as i32);
                let lim = pow2((int_bits + frac_bits) as i32);
                let units = (x * scale).round_ties_even().clamp(-lim, lim - 1.0);
                units / scale
            }
        }
    }

    #[inline]
    pub fn round_complex(self, z: Complex64) -> Complex64 {
        Complex64::new(self.round(z.re), self.round(z.im))
    }
}

#[inline]
fn pow2(e: i32) -> f64 {
    f64::from_bits(((1023 + e as i64) as u64) << 52)
}

impl fmt::Display for ArithmeticProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Fp64 => f.write_str("fp64"),
            Self::Fp32 => f.write_str("fp32"),
            Self::Fixed { int_bits, frac_bits } => write!(f, "q{int_bits}.{frac_bits}"),
        }
    }
}

impl FromStr for ArithmeticProfile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim().to_ascii_lowercase();
        match t.as_str() {
            "fp64" | "f64" | "double" => Ok(Self::Fp64),
            "fp32" | "f32" | "single" => Ok(Self::Fp32),
            _ => {
                let bad = || Error::Config(format!("unknown precision '{s}'"));
                let body = t.strip_prefix('q').ok_or_else(bad)?;
                let (m, f) = body.split_once('.').ok_or_else(bad)?;
                Self::fixed(m.parse().map_err(|_| bad())?, f.parse().map_err(|_| bad())?)
            }
        }
    }
}

impl TryFrom<String> for ArithmeticProfile {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<ArithmeticProfile> for String {
    fn from(p: ArithmeticProfile) -> String {
        p.to_string()
    }
}

impl Arith {
    pub const FP64: Self = Self::wide(ArithmeticProfile::Fp64);

    pub const fn wide(profile: ArithmeticProfile) -> Self {
        Self { profile, accumulator: AccumulatorPolicy::Wide }
    }

    pub const fn narrow(profile: ArithmeticProfile) -> Self {
        Self { profile, accumulator: AccumulatorPolicy::Narrow }
    }

    #[inline]
    pub fn round(self, x: f64) -> f64 {
        self.profile.round(x)
    }

    #[inline]
    pub fn round_complex(self, z: Complex64) -> Complex64 {
        self.profile.round_complex(z)
    }

    /// `acc + a*b` under this arithmetic: one rounding when wide, two when narrow.
    #[inline]
    pub fn mac(self, acc: Complex64, a: Complex64, b: Complex64) -> Complex64 {
        match (self.profile, self.accumulator) {
            (ArithmeticProfile::Fp64, _) => acc + a * b,
            (_, AccumulatorPolicy::Wide) => self.round_complex(acc + a * b),
            (p, AccumulatorPolicy::Narrow) => {
                qadd(QScalar(acc), qmul(QScalar(a), QScalar(b), p), p).0
            }
        }
    }

    /// Real-scalar version of [`Arith::mac`], used for CG step lengths.
    #[inline]
    pub fn mac_real(self, acc: Complex64, a: f64, b: Complex64) -> Complex64 {
        match self.accumulator {
            AccumulatorPolicy::Wide => self.round_complex(acc + b * a),
            AccumulatorPolicy::Narrow => self.round_complex(acc + self.round_complex(b * a)),
        }
    }
}

impl TryFrom<String> for Arith {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Arith> for String {
    fn from(a: Arith) -> String {
        a.to_string()
    }
}

impl From<ArithmeticProfile> for Arith {
    fn from(p: ArithmeticProfile) -> Self {
        Self::wide(p)
    }
}

impl fmt::Display for Arith {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.accumulator {
            AccumulatorPolicy::Wide => write!(f, "{}", self.profile),
            AccumulatorPolicy::Narrow => write!(f, "{}/narrow", self.profile),
        }
    }
}

impl FromStr for Arith {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.split_once('/') {
            None => Ok(Self::wide(s.parse()?)),
            Some((p, "narrow")) => Ok(Self::narrow(p.parse()?)),
            Some((p, "wide")) => Ok(Self::wide(p.parse()?)),
            Some(_) => Err(Error::Config(format!("unknown accumulator in '{s}'"))),
        }
    }
}

/// A complex value already on the grid of its owning profile.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct QScalar(Complex64);

impl QScalar {
    pub fn new(z: Complex64, p: ArithmeticProfile) -> Result<Self> {
        Ok(Self(Complex64::new(p.quantize(z.re)?, p.quantize(z.im)?)))
    }

    pub fn real(x: f64, p: ArithmeticProfile) -> Result<Self> {
        Self::new(Complex64::new(x, 0.0), p)
    }

    pub fn value(self) -> Complex64 {
        self.0
    }
}

impl From<QScalar> for Complex64 {
    fn from(q: QScalar) -> Self {
        q.0
    }
}

pub fn qadd(a: QScalar, b: QScalar, p: ArithmeticProfile) -> QScalar {
    // Sums of two grid values are exact in f64 for every supported format.
    QScalar(p.round_complex(a.0 + b.0))
}

pub fn qsub(a: QScalar, b: QScalar, p: ArithmeticProfile) -> QScalar {
    QScalar(p.round_complex(a.0 - b.0))
}

pub fn qmul(a: QScalar, b: QScalar, p: ArithmeticProfile) -> QScalar {
    match p {
        ArithmeticProfile::Fp64 => QScalar(a.0 * b.0),
        ArithmeticProfile::Fp32 => QScalar(p.round_complex(a.0 * b.0)),
        ArithmeticProfile::Fixed { int_bits, frac_bits } => {
            let scale = pow2(frac_bits as i32);
            let units = |x: f64| (x * scale).round_ties_even() as i128;
            let (ar, ai, br, bi) = (units(a.0.re), units(a.0.im), units(b.0.re), units(b.0.im));
            let lim = 1i128 << (int_bits + frac_bits);
            let narrow = |wide: i128| -> f64 {
                let v = shift_round_even(wide, frac_bits).clamp(-lim, lim - 1);
                v as f64 / scale
            };
            QScalar(Complex64::new(narrow(ar * br - ai * bi), narrow(ar * bi + ai * br)))
        }
    }
}

/// Division is evaluated in `f64` and quantized once.
pub fn qdiv(a: QScalar, b: QScalar, p: ArithmeticProfile) -> Result<QScalar> {
    if b.0.re == 0.0 && b.0.im == 0.0 {
        return Err(Error::Division);
    }
    Ok(QScalar(p.round_complex(a.0 / b.0)))
}

/// Narrow multiply-accumulate `acc + a*b` with a rounding after each step.
pub fn qmac(acc: QScalar, a: QScalar, b: QScalar, p: ArithmeticProfile) -> QScalar {
    qadd(acc, qmul(a, b, p), p)
}

/// Unconjugated inner product `sum(a[i] * b[i])`.
pub fn qdot(a: &[QScalar], b: &[QScalar], p: ArithmeticProfile, acc: AccumulatorPolicy) -> Result<QScalar> {
    if a.len() != b.len() {
        return Err(Error::Dimension(format!("qdot lengths {} and {}", a.len(), b.len())));
    }
    Ok(match acc {
        AccumulatorPolicy::Wide => {
            let s: Complex64 = a.iter().zip(b).map(|(x, y)| x.0 * y.0).sum();
            QScalar(p.round_complex(s))
        }
        AccumulatorPolicy::Narrow => a.iter().zip(b).fold(QScalar::default(), |s, (x, y)| qmac(s, *x, *y, p)),
    })
}

/// Arithmetic right shift by `bits` with round-half-to-even.
fn shift_round_even(v: i128, bits: u32) -> i128 {
    let q = v >> bits;
    let rem = v - (q << bits);
    let half = 1i128 << (bits - 1);
    if rem > half || (rem == half && q & 1 == 1) {
        q + 1
    } else {
        q
    }
}
