//! Subdivision operators on finite windows, operator products and the
//! contraction search on difference schemes.
//!
//! A window of level-`k` data is only ever refined into the values whose whole
//! stencil lies inside it; nothing is padded or extrapolated. Products of
//! level operators are represented by a single combined mask with arity `2^n`:
//! for an outer factor `b` of arity `m` and an inner factor `a`, the combined
//! symbol is `b(z) a(z^m)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::Mask;
use crate::scheme::SchemeSpec;

/// Values `f_lo, ..., f_hi` on consecutive grid indices.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    lo: i64,
    values: Vec<f64>,
}

impl Window {
    pub fn new(lo: i64, values: Vec<f64>) -> Self {
        Window { lo, values }
    }

    /// Unit impulse at index 0 padded with `pad` zeros on each side.
    pub fn delta(pad: usize) -> Self {
        let mut values = vec![0.0; 2 * pad + 1];
        values[pad] = 1.0;
        Window::new(-(pad as i64), values)
    }

    pub fn constant(lo: i64, len: usize, value: f64) -> Self {
        Window::new(lo, vec![value; len])
    }

    pub fn lo(&self) -> i64 {
        self.lo
    }

    /// Last valid index; `lo - 1` for an empty window.
    pub fn hi(&self) -> i64 {
        self.lo + self.values.len() as i64 - 1
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, i: i64) -> Option<f64> {
        let off = i - self.lo;
        if off < 0 {
            return None;
        }
        self.values.get(off as usize).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (i64, f64)> + '_ {
        self.values
            .iter()
            .enumerate()
            .map(move |(p, &v)| (self.lo + p as i64, v))
    }

    /// Backward differences `f_i - f_{i-1}` on `[lo + 1, hi]`.
    pub fn differences(&self) -> Window {
        let values = self.values.windows(2).map(|w| w[1] - w[0]).collect();
        Window::new(self.lo + 1, values)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Largest `|f_i - g_i|` over the common index range, or `None` when the
    /// ranges do not overlap.
    pub fn max_abs_diff(&self, other: &Window) -> Option<f64> {
        let lo = self.lo.max(other.lo);
        let hi = self.hi().min(other.hi());
        if lo > hi {
            return None;
        }
        Some(
            (lo..=hi)
                .map(|i| (self.get(i).unwrap() - other.get(i).unwrap()).abs())
                .fold(0.0, f64::max),
        )
    }
}

/// `ceil(x / m)` for `m > 0`.
fn div_ceil(x: i64, m: i64) -> i64 {
    -((-x).div_euclid(m))
}

/// The composed operator `S_{m_{n-1}} ... S_{m_0}` as a single mask of arity `2^n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProductOperator {
    mask: Mask,
    levels: u32,
}

impl ProductOperator {
    /// The plain binary operator of one level.
    pub fn single(mask: Mask) -> Self {
        ProductOperator { mask, levels: 1 }
    }

    /// The empty product (arity 1, norm 1).
    pub fn identity() -> Self {
        ProductOperator {
            mask: Mask::delta(0),
            levels: 0,
        }
    }

    pub fn mask(&self) -> &Mask {
        &self.mask
    }

    pub fn levels(&self) -> u32 {
        self.levels
    }

    pub fn arity(&self) -> u64 {
        1u64 << self.levels
    }

    /// Sup-norm: the largest absolute coefficient sum over residue classes
    /// modulo the arity.
    pub fn norm(&self) -> f64 {
        self.mask.residue_norm(self.arity())
    }

    /// Applies the operator to a window, keeping only outputs whose stencil
    /// `{ j : i - arity * j ∈ [base, last] }` lies inside the window.
    pub fn apply(&self, f: &Window) -> Result<Window> {
        let m = self.arity() as i64;
        let (b, e) = self.mask.support().unwrap_or((0, 0));
        let (lo, hi) = (f.lo(), f.hi());
        let out_lo = m * (lo - 1) + e + 1;
        let out_hi = m * (hi + 1) + b - 1;
        if f.is_empty() || out_lo > out_hi {
            return Err(Error::EmptyOutput { lo, hi });
        }
        let coeffs = self.mask.coeffs();
        if coeffs.is_empty() {
            return Ok(Window::new(out_lo, vec![0.0; (out_hi - out_lo + 1) as usize]));
        }
        let values = (out_lo..=out_hi)
            .map(|i| {
                let j_lo = div_ceil(i - e, m);
                let j_hi = (i - b).div_euclid(m);
                debug_assert!(j_lo >= lo && j_hi <= hi, "stencil read outside window");
                (j_lo..=j_hi)
                    .map(|j| coeffs[(i - m * j - b) as usize] * f.values[(j - lo) as usize])
                    .sum()
            })
            .collect();
        Ok(Window::new(out_lo, values))
    }

    /// Coefficient-wise difference of two products of equal arity.
    pub fn difference(&self, other: &ProductOperator) -> ProductOperator {
        assert_eq!(self.levels, other.levels, "arity mismatch");
        ProductOperator {
            mask: self.mask.sub(&other.mask),
            levels: self.levels,
        }
    }
}

/// `outer ∘ inner`: apply `inner` first, then `outer`.
pub fn compose(outer: &ProductOperator, inner: &ProductOperator) -> ProductOperator {
    let levels = outer.levels + inner.levels;
    let (Some((bo, _)), Some((bi, _))) = (outer.mask.support(), inner.mask.support()) else {
        return ProductOperator {
            mask: Mask::zero(),
            levels,
        };
    };
    let stride = outer.arity() as usize;
    let lo = outer.mask.coeffs();
    let li = inner.mask.coeffs();
    let mut c = vec![0.0; (lo.len() - 1) + stride * (li.len() - 1) + 1];
    for (p, &a) in li.iter().enumerate() {
        if a == 0.0 {
            continue;
        }
        let off = stride * p;
        for (s, &b) in lo.iter().enumerate() {
            c[off + s] += b * a;
        }
    }
    ProductOperator {
        mask: Mask::new(bo + outer.arity() as i64 * bi, c),
        levels,
    }
}

/// Composes level masks listed rightmost-first: `[m_{n-1}, ..., m_1, m_0]`
/// gives `S_{m_{n-1}} ... S_{m_0}`, with `m_0` acting first. An empty list is
/// the identity.
pub fn compose_levels(masks: &[Mask]) -> ProductOperator {
    masks
        .iter()
        .rev()
        .fold(ProductOperator::identity(), |acc, m| {
            compose(&ProductOperator::single(m.clone()), &acc)
        })
}

/// Sup-norm of the product of level operators, listed rightmost-first.
pub fn product_norm(masks: &[Mask]) -> f64 {
    compose_levels(masks).norm()
}

/// Binary refinement `(S_a f)_i = Σ_j a_{i-2j} f_j` on a finite window.
pub fn apply(mask: &Mask, f: &Window) -> Result<Window> {
    ProductOperator::single(mask.clone()).apply(f)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchParams {
    pub n_max: u32,
    pub k_max: u32,
    pub window: u32,
    pub tol: f64,
}

impl Default for SearchParams {
    fn default() -> Self {
        SearchParams {
            n_max: 8,
            k_max: 32,
            window: 64,
            tol: crate::mask::DEFAULT_TOL,
        }
    }
}

/// Integers `K ≥ 0` and `n ≥ 1` with product norm `mu < 1` for the difference
/// scheme from level `k0 + K` on. `K` counts levels from the scheme's first
/// level `k0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContractionWitness {
    #[serde(rename = "K")]
    pub k_start: u32,
    pub n: u32,
    pub mu: f64,
    /// Number of starting levels whose product norm entered `mu`.
    pub window: u32,
    /// `true` when `mu` is a maximum over finitely many levels rather than
    /// an exact supremum.
    pub windowed: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScannedCell {
    #[serde(rename = "K")]
    pub k_start: u32,
    pub n: u32,
    pub mu: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchOutcome {
    pub witness: Option<ContractionWitness>,
    /// Every `(K, n)` cell evaluated, in scan order, up to the first hit.
    pub scanned: Vec<ScannedCell>,
}

/// Difference masks `q^{[k]}` for `k` in `[from, to]`.
pub(crate) fn difference_masks(s: &SchemeSpec, from: u32, to: u32, tol: f64) -> Result<Vec<Mask>> {
    (from..=to).map(|k| s.difference_mask_at(k, tol)).collect()
}

/// Searches `n = 1..=n_max` (outer) and `K = 0..=K_max` (inner) for the first
/// cell whose product norm is below 1.
pub fn condition_a_scan(s: &SchemeSpec, params: &SearchParams) -> Result<SearchOutcome> {
    if params.n_max == 0 || params.window == 0 {
        return Err(Error::InvalidParameter(
            "n_max and window must be at least 1".into(),
        ));
    }
    let mut scanned = Vec::new();
    if s.is_stationary() {
        let q = s.difference_mask_at(s.k0(), params.tol)?;
        let single = ProductOperator::single(q);
        let mut product = ProductOperator::identity();
        for n in 1..=params.n_max {
            product = compose(&single, &product);
            let mu = product.norm();
            scanned.push(ScannedCell { k_start: 0, n, mu });
            if mu < 1.0 {
                let witness = ContractionWitness {
                    k_start: 0,
                    n,
                    mu,
                    window: 1,
                    windowed: false,
                };
                return Ok(SearchOutcome {
                    witness: Some(witness),
                    scanned,
                });
            }
        }
        return Ok(SearchOutcome {
            witness: None,
            scanned,
        });
    }

    let k0 = s.k0();
    let mut last = k0 + params.k_max + params.window + params.n_max - 1;
    if let Some(end) = s.last_level() {
        last = last.min(end);
    }
    let qs = difference_masks(s, k0, last, params.tol)?;
    // products[t] = S_{q^{[k0+t+n-1]}} ... S_{q^{[k0+t]}}
    let mut products: Vec<ProductOperator> = vec![ProductOperator::identity(); qs.len()];
    for n in 1..=params.n_max {
        let count = qs.len().saturating_sub(n as usize - 1);
        if count == 0 {
            break;
        }
        products.truncate(count);
        products
            .par_iter_mut()
            .enumerate()
            .for_each(|(t, p)| {
                let outer = ProductOperator::single(qs[t + n as usize - 1].clone());
                *p = compose(&outer, p);
            });
        let norms: Vec<f64> = products.par_iter().map(ProductOperator::norm).collect();
        for k_start in 0..=params.k_max {
            let from = k_start as usize;
            if from >= norms.len() {
                break;
            }
            let to = (from + params.window as usize).min(norms.len() - 1);
            let mu = norms[from..=to].iter().copied().fold(0.0, f64::max);
            scanned.push(ScannedCell { k_start, n, mu });
            if mu < 1.0 {
                let witness = ContractionWitness {
                    k_start,
                    n,
                    mu,
                    window: (to - from + 1) as u32,
                    windowed: true,
                };
                return Ok(SearchOutcome {
                    witness: Some(witness),
                    scanned,
                });
            }
        }
    }
    Ok(SearchOutcome {
        witness: None,
        scanned,
    })
}

/// First `(K, n)` cell with product norm below 1; [`Error::NotFound`] when the
/// scanned range has none (inconclusive, not a proof of divergence).
pub fn condition_a_search(s: &SchemeSpec, params: &SearchParams) -> Result<ContractionWitness> {
    condition_a_scan(s, params)?.witness.ok_or(Error::NotFound {
        n_max: params.n_max,
        k_max: params.k_max,
    })
}
