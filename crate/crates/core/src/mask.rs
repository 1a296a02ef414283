//! Finitely supported coefficient sequences (masks) and their symbol algebra.
//!
//! A [`Mask`] stores the coefficients `m_base, m_{base+1}, ...` of a
//! bi-infinite sequence that vanishes outside the stored range. The symbol of
//! a mask is the Laurent polynomial `m(z) = Σ m_i z^i`.
//!
//! The factorizations used by the convergence analysis live here as well:
//!
//! * [`Mask::difference_mask`] divides `a(z)` by `1 + z`, giving the mask of
//!   the scheme that acts on backward differences;
//! * [`Mask::perturbation_mask`] subtracts the linear B-spline mask;
//! * [`Mask::telescoped_mask`] divides by `1 - z^2`.

use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default tolerance for symbol and zero tests.
pub const DEFAULT_TOL: f64 = 1e-12;

/// Coefficients at or below this magnitude left behind by a factorization are
/// treated as rounding dust and trimmed.
pub const TRIM_EPS: f64 = 1e-14;

/// Threshold for the reconstruction check performed after each factorization.
const RECONSTRUCTION_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MaskError {
    #[error("mask does not reproduce constants: a(-1) = {at_minus_one:e}, a(1) = {at_one}")]
    NotConstantReproducing { at_minus_one: f64, at_one: f64 },
    #[error("mask is not divisible by 1 - z^2: d(1) = {at_one:e}, d(-1) = {at_minus_one:e}")]
    NotFactorable { at_one: f64, at_minus_one: f64 },
    #[error("factorization failed its reconstruction check (residual {residual:e})")]
    Inconsistent { residual: f64 },
    #[error("mask coefficient {0} is not finite")]
    NonFinite(f64),
}

/// A finitely supported real sequence with an explicit integer base index.
///
/// The stored form is canonical: the first and last coefficients are nonzero,
/// and the zero mask has no coefficients at all.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MaskLiteral", into = "MaskLiteral")]
pub struct Mask {
    base: i64,
    coeffs: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct MaskLiteral {
    base: i64,
    coeffs: Vec<f64>,
}

impl TryFrom<MaskLiteral> for Mask {
    type Error = MaskError;

    fn try_from(lit: MaskLiteral) -> Result<Self, Self::Error> {
        if let Some(&bad) = lit.coeffs.iter().find(|c| !c.is_finite()) {
            return Err(MaskError::NonFinite(bad));
        }
        Ok(Mask::new(lit.base, lit.coeffs))
    }
}

impl From<Mask> for MaskLiteral {
    fn from(m: Mask) -> Self {
        MaskLiteral {
            base: m.base,
            coeffs: m.coeffs,
        }
    }
}

impl Mask {
    /// Builds a mask whose first coefficient sits at index `base`.
    /// Exact leading and trailing zeros are dropped.
    pub fn new(base: i64, coeffs: Vec<f64>) -> Self {
        Self::trimmed(base, coeffs, 0.0)
    }

    pub fn zero() -> Self {
        Mask {
            base: 0,
            coeffs: Vec::new(),
        }
    }

    /// The unit impulse at index `at`.
    pub fn delta(at: i64) -> Self {
        Mask::new(at, vec![1.0])
    }

    fn trimmed(base: i64, mut coeffs: Vec<f64>, eps: f64) -> Self {
        let first = coeffs.iter().position(|c| c.abs() > eps);
        let Some(first) = first else {
            return Mask::zero();
        };
        let last = coeffs.iter().rposition(|c| c.abs() > eps).unwrap();
        coeffs.truncate(last + 1);
        coeffs.drain(..first);
        Mask {
            base: base + first as i64,
            coeffs,
        }
    }

    pub fn base(&self) -> i64 {
        self.base
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn is_empty(&self) -> bool {
        self.is_zero()
    }

    /// First and last stored index, `None` for the zero mask.
    pub fn support(&self) -> Option<(i64, i64)> {
        if self.is_zero() {
            None
        } else {
            Some((self.base, self.base + self.coeffs.len() as i64 - 1))
        }
    }

    /// True when the support lies inside `[lo, hi]` (the zero mask always does).
    pub fn support_within(&self, lo: i64, hi: i64) -> bool {
        match self.support() {
            None => true,
            Some((a, b)) => a >= lo && b <= hi,
        }
    }

    /// Coefficient at absolute index `i`, zero outside the stored range.
    pub fn coeff(&self, i: i64) -> f64 {
        let off = i - self.base;
        if off < 0 || off >= self.coeffs.len() as i64 {
            0.0
        } else {
            self.coeffs[off as usize]
        }
    }

    /// Iterator over `(index, coefficient)` pairs of the stored range.
    pub fn iter(&self) -> impl Iterator<Item = (i64, f64)> + '_ {
        self.coeffs
            .iter()
            .enumerate()
            .map(move |(p, &c)| (self.base + p as i64, c))
    }

    /// Evaluates the symbol at a real point.
    pub fn symbol(&self, z: f64) -> f64 {
        self.symbol_complex(Complex64::new(z, 0.0)).re
    }

    /// Evaluates the symbol at a complex point (`z` must be nonzero when the
    /// mask has negative indices).
    pub fn symbol_complex(&self, z: Complex64) -> Complex64 {
        if self.is_zero() {
            return Complex64::new(0.0, 0.0);
        }
        // Horner on the polynomial part, then shift by z^base.
        let mut acc = Complex64::new(0.0, 0.0);
        for &c in self.coeffs.iter().rev() {
            acc = acc * z + c;
        }
        acc * z.powi(self.base as i32)
    }

    /// Largest absolute coefficient (the sequence sup-norm).
    pub fn coeff_sup(&self) -> f64 {
        self.coeffs.iter().fold(0.0, |m, c| m.max(c.abs()))
    }

    /// Sup-norm of the binary subdivision operator with this mask: the larger
    /// of the absolute coefficient sums over even and odd indices.
    pub fn sup_norm(&self) -> f64 {
        self.residue_norm(2)
    }

    /// Max over residues `r mod arity` of `Σ_j |m_{r + arity j}|`.
    pub fn residue_norm(&self, arity: u64) -> f64 {
        let arity = arity as i64;
        let mut sums = vec![0.0; arity as usize];
        for (i, c) in self.iter() {
            sums[i.rem_euclid(arity) as usize] += c.abs();
        }
        sums.into_iter().fold(0.0, f64::max)
    }

    /// Absolute coefficient sums per residue class modulo `arity`.
    pub fn residue_sums(&self, arity: u64) -> Vec<f64> {
        let arity = arity as i64;
        let mut sums = vec![0.0; arity as usize];
        for (i, c) in self.iter() {
            sums[i.rem_euclid(arity) as usize] += c;
        }
        sums
    }

    pub fn reproduces_constants(&self, tol: f64) -> bool {
        self.symbol(-1.0).abs() <= tol && (self.symbol(1.0) - 2.0).abs() <= tol
    }

    fn check_constants(&self, tol: f64) -> Result<(), MaskError> {
        if self.reproduces_constants(tol) {
            Ok(())
        } else {
            Err(MaskError::NotConstantReproducing {
                at_minus_one: self.symbol(-1.0),
                at_one: self.symbol(1.0),
            })
        }
    }

    /// The mask `q` with `a(z) = (1 + z) q(z)`, via the alternating partial
    /// sums `q_i = Σ_{j ≤ i} (-1)^{i-j} a_j`.
    pub fn difference_mask(&self, tol: f64) -> Result<Mask, MaskError> {
        self.check_constants(tol)?;
        if self.is_zero() {
            return Ok(Mask::zero());
        }
        let n = self.coeffs.len();
        let mut q = Vec::with_capacity(n - 1);
        let mut run = 0.0;
        for &a in &self.coeffs[..n - 1] {
            run = a - run;
            q.push(run);
        }
        let q = Mask::trimmed(self.base, q, TRIM_EPS);
        let residual = q.from_difference().max_abs_diff(self);
        if residual > RECONSTRUCTION_TOL {
            return Err(MaskError::Inconsistent { residual });
        }
        Ok(q)
    }

    /// The mask `a` with `a_i = q_i + q_{i-1}`, i.e. `a(z) = (1 + z) q(z)`.
    pub fn from_difference(&self) -> Mask {
        if self.is_zero() {
            return Mask::zero();
        }
        let n = self.coeffs.len();
        let mut a = vec![0.0; n + 1];
        for (p, &c) in self.coeffs.iter().enumerate() {
            a[p] += c;
            a[p + 1] += c;
        }
        Mask::new(self.base, a)
    }

    /// `d = a - h` with `h = {1/2, 1, 1/2}` at base −1, aligned by absolute index.
    pub fn perturbation_mask(&self) -> Mask {
        self.sub(&linear_bspline_mask())
    }

    /// The mask `e` with `d(z) = (1 - z^2) e(z)`, via `e_i = Σ_{j ≥ 0} d_{i-2j}`.
    pub fn telescoped_mask(&self, tol: f64) -> Result<Mask, MaskError> {
        let at_one = self.symbol(1.0);
        let at_minus_one = self.symbol(-1.0);
        if at_one.abs() > tol || at_minus_one.abs() > tol {
            return Err(MaskError::NotFactorable {
                at_one,
                at_minus_one,
            });
        }
        if self.coeffs.len() < 3 {
            // A nonzero mask of length ≤ 2 cannot vanish at both ±1 beyond tol
            // unless it is dust.
            return Ok(Mask::zero());
        }
        let n = self.coeffs.len();
        let mut e = vec![0.0; n - 2];
        for p in 0..n - 2 {
            e[p] = self.coeffs[p] + if p >= 2 { e[p - 2] } else { 0.0 };
        }
        let e = Mask::trimmed(self.base, e, TRIM_EPS);
        let residual = e.times_one_minus_z2().max_abs_diff(self);
        if residual > RECONSTRUCTION_TOL {
            return Err(MaskError::Inconsistent { residual });
        }
        Ok(e)
    }

    /// `e_i - e_{i-2}`, the inverse of [`Mask::telescoped_mask`].
    pub fn times_one_minus_z2(&self) -> Mask {
        if self.is_zero() {
            return Mask::zero();
        }
        let n = self.coeffs.len();
        let mut d = vec![0.0; n + 2];
        for (p, &c) in self.coeffs.iter().enumerate() {
            d[p] += c;
            d[p + 2] -= c;
        }
        Mask::new(self.base, d)
    }

    fn combine(&self, other: &Mask, f: impl Fn(f64, f64) -> f64) -> Mask {
        let (lo, hi) = match (self.support(), other.support()) {
            (None, None) => return Mask::zero(),
            (Some(s), None) | (None, Some(s)) => s,
            (Some((a, b)), Some((c, d))) => (a.min(c), b.max(d)),
        };
        let coeffs = (lo..=hi)
            .map(|i| f(self.coeff(i), other.coeff(i)))
            .collect();
        Mask::new(lo, coeffs)
    }

    pub fn add(&self, other: &Mask) -> Mask {
        self.combine(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Mask) -> Mask {
        self.combine(other, |a, b| a - b)
    }

    pub fn scale(&self, alpha: f64) -> Mask {
        Mask::new(self.base, self.coeffs.iter().map(|c| alpha * c).collect())
    }

    /// Sup-norm of the coefficient-wise difference.
    pub fn max_abs_diff(&self, other: &Mask) -> f64 {
        self.sub(other).coeff_sup()
    }
}

impl fmt::Display for Mask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (p, c) in self.coeffs.iter().enumerate() {
            if p > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, "}} @ {}", self.base)
    }
}

/// The stationary linear B-spline mask `{1/2, 1, 1/2}` at base −1.
pub fn linear_bspline_mask() -> Mask {
    Mask::new(-1, vec![0.5, 1.0, 0.5])
}
