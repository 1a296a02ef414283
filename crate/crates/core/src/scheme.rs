//! Level-indexed schemes, asymptotic similarity diagnostics and convergence
//! certificates.
//!
//! A non-stationary scheme that reproduces constants and is asymptotically
//! similar to a stationary scheme whose difference scheme contracts inherits
//! the contraction from some level on. [`certify_theorem4`] carries this out
//! on a finite window of levels: it finds the comparator's contraction,
//! locates the level where the two difference-scheme products agree to
//! within `ε`, and assembles the error constants `C₁`, `C₂`, `Γ` and `C`.
//!
//! Infinite-`k` statements (limits, sums, suprema) can only be observed over
//! a window. Every such result carries a `windowed` flag or an explicit
//! verdict string instead of a bare boolean.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::catalog::{self, AnalyticFlags, Formula};
use crate::error::{Error, Result};
use crate::mask::{Mask, MaskError};
use crate::operator::{
    compose, condition_a_search, difference_masks, ContractionWitness, ProductOperator,
    SearchParams,
};

/// Products longer than this many levels are bounded blockwise through
/// submultiplicativity instead of being expanded (arity would be `2^levels`).
const MAX_EXPANDED_LEVELS: u32 = 16;

/// A power-law decay exponent at least this large counts as a decay trend.
pub const MIN_DECAY_EXPONENT: f64 = 0.25;
/// Below this exponent the differences show no decay trend at all.
pub const NO_TREND_EXPONENT: f64 = 0.05;
/// Octave increments of the partial sums that shrink by less than this
/// factor are treated as non-summable growth.
pub const OCTAVE_GROWTH_RATIO: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SchemeKind {
    Stationary,
    Table,
    Formula,
}

#[derive(Debug, Clone, PartialEq)]
enum MaskSource {
    Stationary(Mask),
    Table(Vec<Mask>),
    Formula(Formula),
}

/// A family of level masks `a^{[k]}`, `k ≥ k0`, all supported in `[-N, N]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SchemeSpec {
    name: String,
    source: MaskSource,
    k0: u32,
    locality: i64,
    bound_hint: Option<f64>,
    flags: Option<AnalyticFlags>,
}

impl SchemeSpec {
    pub fn stationary(name: impl Into<String>, mask: Mask, locality: i64) -> Result<Self> {
        let s = Self::build(name, MaskSource::Stationary(mask), 0, locality)?;
        s.mask_at(0)?;
        Ok(s)
    }

    /// Explicit per-level masks; `masks[p]` is the mask of level `k0 + p`.
    pub fn table(name: impl Into<String>, masks: Vec<Mask>, k0: u32, locality: i64) -> Result<Self> {
        if masks.is_empty() {
            return Err(Error::InvalidParameter("mask table is empty".into()));
        }
        let n = masks.len() as u32;
        let s = Self::build(name, MaskSource::Table(masks), k0, locality)?;
        for k in k0..k0 + n {
            s.mask_at(k)?;
        }
        Ok(s)
    }

    pub fn formula(name: impl Into<String>, formula: Formula, k0: u32, locality: i64) -> Result<Self> {
        Self::build(name, MaskSource::Formula(formula), k0, locality)
    }

    fn build(name: impl Into<String>, source: MaskSource, k0: u32, locality: i64) -> Result<Self> {
        if locality < 1 {
            return Err(Error::InvalidParameter(format!(
                "locality bound N = {locality} must be a positive integer"
            )));
        }
        Ok(SchemeSpec {
            name: name.into(),
            source,
            k0,
            locality,
            bound_hint: None,
            flags: None,
        })
    }

    /// Asserts `sup_k ‖a^{[k]}‖∞` (used for `C₂` instead of a windowed scan).
    pub fn with_bound_hint(mut self, bound: f64) -> Self {
        self.bound_hint = Some(bound);
        self
    }

    /// Attaches analytic flags; a known sup bound becomes the bound hint.
    pub fn with_flags(mut self, flags: AnalyticFlags) -> Self {
        if self.bound_hint.is_none() {
            self.bound_hint = flags.sup_bound;
        }
        self.flags = Some(flags);
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn kind(&self) -> SchemeKind {
        match self.source {
            MaskSource::Stationary(_) => SchemeKind::Stationary,
            MaskSource::Table(_) => SchemeKind::Table,
            MaskSource::Formula(_) => SchemeKind::Formula,
        }
    }

    pub fn is_stationary(&self) -> bool {
        self.kind() == SchemeKind::Stationary
    }

    pub fn k0(&self) -> u32 {
        self.k0
    }

    /// The locality bound `N`.
    pub fn locality(&self) -> i64 {
        self.locality
    }

    pub fn bound_hint(&self) -> Option<f64> {
        self.bound_hint
    }

    pub fn flags(&self) -> Option<AnalyticFlags> {
        self.flags
    }

    /// Last level with a defined mask, `None` for unbounded families.
    pub fn last_level(&self) -> Option<u32> {
        match &self.source {
            MaskSource::Stationary(_) => None,
            MaskSource::Table(m) => Some(self.k0 + m.len() as u32 - 1),
            MaskSource::Formula(f) => f.last_level(self.k0),
        }
    }

    /// The mask of level `k`, checked against the locality bound.
    pub fn mask_at(&self, k: u32) -> Result<Mask> {
        let out_of_range = || Error::LevelOutOfRange {
            level: k,
            first: self.k0,
            last: self.last_level(),
        };
        let mask = match &self.source {
            MaskSource::Stationary(m) => m.clone(),
            MaskSource::Table(masks) => {
                if k < self.k0 {
                    return Err(out_of_range());
                }
                masks.get((k - self.k0) as usize).cloned().ok_or_else(out_of_range)?
            }
            MaskSource::Formula(f) => {
                if k < self.k0 {
                    return Err(out_of_range());
                }
                f.mask_at(k, self.k0)?
            }
        };
        if let Some(support) = mask.support() {
            if !mask.support_within(-self.locality, self.locality) {
                return Err(Error::SupportExceedsLocality {
                    level: k,
                    support,
                    locality: self.locality,
                });
            }
        }
        Ok(mask)
    }

    /// The difference mask `q^{[k]}`; fails when level `k` does not reproduce constants.
    pub fn difference_mask_at(&self, k: u32, tol: f64) -> Result<Mask> {
        self.mask_at(k)?
            .difference_mask(tol)
            .map_err(|e| match e {
                MaskError::NotConstantReproducing {
                    at_minus_one,
                    at_one,
                } => Error::NotConstantReproducing {
                    level: k,
                    at_minus_one,
                    at_one,
                },
                other => other.into(),
            })
    }

    /// Parses a scheme description (see [`SchemeFile`]).
    pub fn from_json(text: &str) -> Result<Self> {
        let file: SchemeFile = serde_json::from_str(text)
            .map_err(|e| Error::InvalidParameter(format!("scheme description: {e}")))?;
        file.into_spec()
    }
}

/// On-disk scheme description.
///
/// ```json
/// {"kind":"formula","name":"derham","params":{"gamma":2.0,"eps":"alpha_over_k","alpha":1.5},"k0":1,"N":2}
/// {"kind":"table","masks":[{"base":-1,"coeffs":[0.5,1.0,0.5]}],"k0":0,"N":1}
/// {"kind":"stationary","mask":{"base":-1,"coeffs":[0.5,1.0,0.5]},"N":1}
/// ```
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum SchemeFile {
    Stationary {
        mask: Mask,
        #[serde(rename = "N")]
        locality: i64,
        #[serde(default)]
        name: Option<String>,
        #[serde(default)]
        bound_hint: Option<f64>,
    },
    Table {
        masks: Vec<Mask>,
        #[serde(default)]
        k0: u32,
        #[serde(rename = "N")]
        locality: i64,
        #[serde(default)]
        name: Option<String>,
        #[serde(default)]
        bound_hint: Option<f64>,
    },
    Formula {
        name: String,
        #[serde(default)]
        params: serde_json::Map<String, serde_json::Value>,
        #[serde(default)]
        k0: Option<u32>,
        #[serde(rename = "N", default)]
        locality: Option<i64>,
        #[serde(default)]
        bound_hint: Option<f64>,
    },
}

impl SchemeFile {
    pub fn into_spec(self) -> Result<SchemeSpec> {
        match self {
            SchemeFile::Stationary {
                mask,
                locality,
                name,
                bound_hint,
            } => {
                let s = SchemeSpec::stationary(name.unwrap_or_else(|| "stationary".into()), mask, locality)?;
                Ok(match bound_hint {
                    Some(b) => s.with_bound_hint(b),
                    None => s,
                })
            }
            SchemeFile::Table {
                masks,
                k0,
                locality,
                name,
                bound_hint,
            } => {
                let s = SchemeSpec::table(name.unwrap_or_else(|| "table".into()), masks, k0, locality)?;
                Ok(match bound_hint {
                    Some(b) => s.with_bound_hint(b),
                    None => s,
                })
            }
            SchemeFile::Formula {
                name,
                params,
                k0,
                locality,
                bound_hint,
            } => {
                let mut numeric = std::collections::BTreeMap::new();
                for (key, value) in &params {
                    match (key.as_str(), value) {
                        ("eps", serde_json::Value::String(kind)) => {
                            if kind != "alpha_over_k" {
                                return Err(Error::InvalidParameter(format!(
                                    "unsupported eps sequence `{kind}`"
                                )));
                            }
                        }
                        ("eps_table", serde_json::Value::Array(_)) => {}
                        (_, serde_json::Value::Number(n)) => {
                            numeric.insert(key.clone(), n.as_f64().unwrap_or(f64::NAN));
                        }
                        _ => {
                            return Err(Error::InvalidParameter(format!(
                                "parameter `{key}` has unsupported value {value}"
                            )))
                        }
                    }
                }
                if let Some(k0) = k0 {
                    numeric.insert("k0".into(), k0 as f64);
                }
                let mut spec = if let Some(serde_json::Value::Array(table)) = params.get("eps_table") {
                    let eps = table
                        .iter()
                        .map(|v| {
                            v.as_f64()
                                .ok_or_else(|| Error::InvalidParameter("eps_table entries must be numbers".into()))
                        })
                        .collect::<Result<Vec<_>>>()?;
                    let gamma = numeric
                        .get("gamma")
                        .copied()
                        .ok_or_else(|| Error::InvalidParameter("missing parameter `gamma`".into()))?;
                    catalog::derham_nonstationary(gamma, catalog::EpsSequence::Table(eps), k0.unwrap_or(1))?
                } else {
                    catalog::lookup(&name, &numeric)?.spec
                };
                if let Some(n) = locality {
                    if n != spec.locality {
                        // re-validate the catalog masks against the declared bound
                        spec.locality = n;
                        if n < 1 {
                            return Err(Error::InvalidParameter(format!("N = {n} must be positive")));
                        }
                        spec.mask_at(spec.k0)?;
                    }
                }
                if let Some(b) = bound_hint {
                    spec.bound_hint = Some(b);
                }
                Ok(spec)
            }
        }
    }
}

/// Reads a scheme description file.
pub fn load_scheme_file(path: &Path) -> std::result::Result<SchemeSpec, LoadError> {
    let text = std::fs::read_to_string(path).map_err(|e| LoadError::Io(path.display().to_string(), e.to_string()))?;
    SchemeSpec::from_json(&text).map_err(LoadError::Scheme)
}

#[derive(Debug, thiserror::Error)]
pub enum LoadError {
    #[error("cannot read {0}: {1}")]
    Io(String, String),
    #[error(transparent)]
    Scheme(Error),
}

/// Inclusive range of levels `[first, last]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LevelRange {
    pub first: u32,
    pub last: u32,
}

impl LevelRange {
    pub fn new(first: u32, last: u32) -> Result<Self> {
        if first > last {
            return Err(Error::InvalidParameter(format!(
                "empty level range {first}:{last}"
            )));
        }
        Ok(LevelRange { first, last })
    }

    pub fn len(&self) -> usize {
        (self.last - self.first + 1) as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn iter(&self) -> std::ops::RangeInclusive<u32> {
        self.first..=self.last
    }

    /// Clips the range to the levels where `s` is defined.
    pub(crate) fn clip_to(&self, s: &SchemeSpec) -> Result<LevelRange> {
        let first = self.first.max(s.k0());
        let last = s.last_level().map_or(self.last, |l| l.min(self.last));
        LevelRange::new(first, last)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Boundedness {
    /// `max_k ‖a^{[k]}‖∞` (or the bound hint).
    pub coeff_sup: f64,
    /// `max_k ‖S_{a^{[k]}}‖` over the scanned levels.
    pub operator_sup: f64,
    /// `true` when `coeff_sup` came from the scheme's bound hint.
    pub from_hint: bool,
}

pub fn boundedness_estimate(s: &SchemeSpec, k_range: LevelRange) -> Result<Boundedness> {
    let range = k_range.clip_to(s)?;
    let mut coeff_sup: f64 = 0.0;
    let mut operator_sup: f64 = 0.0;
    for k in range.iter() {
        let m = s.mask_at(k)?;
        coeff_sup = coeff_sup.max(m.coeff_sup());
        operator_sup = operator_sup.max(m.sup_norm());
    }
    Ok(match s.bound_hint() {
        Some(hint) => Boundedness {
            coeff_sup: hint,
            operator_sup,
            from_hint: true,
        },
        None => Boundedness {
            coeff_sup,
            operator_sup,
            from_hint: false,
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SimilarVerdict {
    Yes,
    No,
    Inconclusive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EquivalentVerdict {
    Summable,
    NotSummableInWindow,
    Inconclusive,
}

/// Least-squares fit `diff ≈ rate · k^{-exponent}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub rate: f64,
    pub exponent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityReport {
    pub left: String,
    pub right: String,
    pub locality: i64,
    pub k_range: LevelRange,
    /// `(k, ‖a^{[k]} − a^{*[k]}‖∞)`.
    pub per_k_diff: Vec<(u32, f64)>,
    pub partial_sums: Vec<f64>,
    pub similar_verdict: SimilarVerdict,
    pub equivalent_verdict: EquivalentVerdict,
    pub decay_fit: Option<DecayFit>,
    pub tol: f64,
}

fn check_alignment(a: &SchemeSpec, b: &SchemeSpec) -> Result<i64> {
    if a.locality() != b.locality() {
        return Err(Error::AlignmentMismatch {
            left: a.locality(),
            right: b.locality(),
        });
    }
    Ok(a.locality())
}

fn common_range(a: &SchemeSpec, b: &SchemeSpec, k_range: LevelRange) -> Result<LevelRange> {
    let r = k_range.clip_to(a)?;
    r.clip_to(b)
}

fn fit_power_law(points: &[(u32, f64)]) -> Option<DecayFit> {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|&&(k, d)| k > 0 && d > 0.0)
        .map(|&(k, d)| ((k as f64).ln(), d.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    Some(DecayFit {
        rate: (my - slope * mx).exp(),
        exponent: -slope,
    })
}

/// Per-level sup differences of the two mask families over `[-N, N]`, with
/// windowed verdicts on their limit (similarity) and on their sum
/// (equivalence).
///
/// * similar = yes: the last quarter of the differences is below `tol`, or
///   it is non-increasing and the power-law fit over the last half decays
///   with exponent at least [`MIN_DECAY_EXPONENT`];
/// * similar = no: the last quarter stays above `tol` and the fitted
///   exponent is below [`NO_TREND_EXPONENT`];
/// * equivalent = summable: the partial sums grow by at most `tol` over
///   the last quarter;
/// * equivalent = not-summable-in-window: the last octave of levels adds
///   more than `tol` and octave increments are not shrinking geometrically.
pub fn similarity_report(
    a: &SchemeSpec,
    b: &SchemeSpec,
    k_range: LevelRange,
    tol: f64,
) -> Result<SimilarityReport> {
    let locality = check_alignment(a, b)?;
    let range = common_range(a, b, k_range)?;
    if range.len() < 8 {
        return Err(Error::InvalidParameter(format!(
            "similarity needs at least 8 levels, got {}",
            range.len()
        )));
    }
    let per_k_diff = range
        .iter()
        .map(|k| Ok((k, a.mask_at(k)?.max_abs_diff(&b.mask_at(k)?))))
        .collect::<Result<Vec<_>>>()?;
    let partial_sums: Vec<f64> = per_k_diff
        .iter()
        .scan(0.0, |acc, &(_, d)| {
            *acc += d;
            Some(*acc)
        })
        .collect();

    let len = per_k_diff.len();
    let quarter = (len / 4).max(2);
    let tail = &per_k_diff[len - quarter..];
    let decay_fit = fit_power_law(&per_k_diff[len / 2..]);
    let tail_max = tail.iter().map(|p| p.1).fold(0.0, f64::max);
    let tail_min = tail.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    let non_increasing = tail.windows(2).all(|w| w[1].1 <= w[0].1 + tol);
    let exponent = decay_fit.map(|f| f.exponent);
    let similar_verdict = if tail_max <= tol
        || (non_increasing && exponent.is_some_and(|p| p >= MIN_DECAY_EXPONENT))
    {
        SimilarVerdict::Yes
    } else if tail_min > tol && exponent.is_none_or(|p| p < NO_TREND_EXPONENT) {
        SimilarVerdict::No
    } else {
        SimilarVerdict::Inconclusive
    };

    let sum_at = |k: u32| partial_sums[(k - range.first) as usize];
    let last_growth = partial_sums[len - 1] - partial_sums[len - quarter];
    let k_end = range.last;
    let octave = |hi: u32| -> Option<f64> {
        let lo = hi / 2;
        (lo >= range.first && lo < hi).then(|| sum_at(hi) - sum_at(lo))
    };
    let equivalent_verdict = if last_growth <= tol {
        EquivalentVerdict::Summable
    } else {
        match (octave(k_end), octave(k_end / 2)) {
            (Some(cur), Some(prev)) if cur > tol && prev > 0.0 => {
                if cur / prev >= OCTAVE_GROWTH_RATIO {
                    EquivalentVerdict::NotSummableInWindow
                } else {
                    EquivalentVerdict::Inconclusive
                }
            }
            (Some(cur), None) if cur > tol => EquivalentVerdict::NotSummableInWindow,
            _ => EquivalentVerdict::Inconclusive,
        }
    };

    Ok(SimilarityReport {
        left: a.name().to_string(),
        right: b.name().to_string(),
        locality,
        k_range: range,
        per_k_diff,
        partial_sums,
        similar_verdict,
        equivalent_verdict,
        decay_fit,
        tol,
    })
}

/// Upper bound on `‖S_{m_{t-1}} ... S_{m_0}‖` for masks listed first-acting
/// first: exact when at most [`MAX_EXPANDED_LEVELS`] levels, otherwise the
/// product of exact norms of consecutive blocks.
pub fn leading_product_norm(masks_in_order: &[Mask]) -> f64 {
    masks_in_order
        .chunks(MAX_EXPANDED_LEVELS as usize)
        .map(|block| {
            block
                .iter()
                .fold(ProductOperator::identity(), |acc, m| {
                    compose(&ProductOperator::single(m.clone()), &acc)
                })
                .norm()
        })
        .product()
}

/// `S_{q[t+n-1]} ... S_{q[t]}` for each start `t` with all factors present.
fn sliding_products(qs: &[Mask], n: u32) -> Vec<ProductOperator> {
    let n = n as usize;
    if qs.len() < n {
        return Vec::new();
    }
    (0..=qs.len() - n)
        .map(|t| {
            qs[t..t + n].iter().fold(ProductOperator::identity(), |acc, q| {
                compose(&ProductOperator::single(q.clone()), &acc)
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferOutcome {
    pub witness: ContractionWitness,
    pub mu_star: f64,
    pub epsilon: f64,
    /// First level from which every scanned product difference is at most `ε`.
    pub k_tilde: u32,
    /// `(k, ‖P_target(k) − P_comparator(k)‖)` for each scanned start level.
    pub product_diffs: Vec<(u32, f64)>,
    /// Largest target product norm from the certified start level on.
    pub observed_mu: f64,
}

fn check_constants_on(s: &SchemeSpec, range: LevelRange, tol: f64) -> Result<Vec<Mask>> {
    difference_masks(s, range.first, range.last, tol)
}

/// Moves a contraction witness of `comparator` to an asymptotically similar
/// `target`. `mu` defaults to `(1 + μ*) / 2`; `ε = (μ − μ*) / 2`.
pub fn transfer_condition_a(
    target: &SchemeSpec,
    comparator: &SchemeSpec,
    witness_star: &ContractionWitness,
    k_range: LevelRange,
    tol: f64,
    mu: Option<f64>,
) -> Result<TransferOutcome> {
    check_alignment(target, comparator)?;
    let range = k_range.clip_to(target)?;
    let q_target = check_constants_on(target, range, tol)?;
    let comp_range = range.clip_to(comparator)?;
    check_constants_on(comparator, comp_range, tol)?;

    let report = similarity_report(target, comparator, range, tol)?;
    if report.similar_verdict != SimilarVerdict::Yes {
        return Err(Error::SimilarityNotEstablished {
            verdict: format!("{:?}", report.similar_verdict).to_lowercase(),
        });
    }

    let mu_star = witness_star.mu;
    let mu = mu.unwrap_or((1.0 + mu_star) / 2.0);
    if !(mu >= mu_star && mu < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "mu = {mu} must lie in [mu* = {mu_star}, 1)"
        )));
    }
    let epsilon = (mu - mu_star) / 2.0;
    let n = witness_star.n;

    let q_comp = range
        .iter()
        .map(|k| comparator.difference_mask_at(k, tol))
        .collect::<Result<Vec<_>>>()?;
    let p_target = sliding_products(&q_target, n);
    let p_comp = sliding_products(&q_comp, n);
    if p_target.is_empty() {
        return Err(Error::InvalidParameter(format!(
            "level range {}:{} is shorter than n = {n}",
            range.first, range.last
        )));
    }
    let product_diffs: Vec<(u32, f64)> = p_target
        .iter()
        .zip(&p_comp)
        .enumerate()
        .map(|(t, (pt, pc))| (range.first + t as u32, pt.difference(pc).norm()))
        .collect();

    // first index from which the whole remaining tail is within epsilon
    let mut start = product_diffs.len();
    for (idx, &(_, d)) in product_diffs.iter().enumerate().rev() {
        if d <= epsilon {
            start = idx;
        } else {
            break;
        }
    }
    if start == product_diffs.len() {
        return Err(Error::TailNotReached { epsilon });
    }
    let k_tilde = product_diffs[start].0;
    let k_star_abs = comparator.k0() + witness_star.k_start;
    let k_abs = k_tilde.max(k_star_abs).max(target.k0());
    let from = (k_abs - range.first) as usize;
    let observed_mu = p_target[from..]
        .iter()
        .map(ProductOperator::norm)
        .fold(0.0, f64::max);
    if observed_mu > mu + tol {
        return Err(Error::Inconsistent(format!(
            "target product norm {observed_mu} exceeds mu = {mu} after level {k_abs}"
        )));
    }
    Ok(TransferOutcome {
        witness: ContractionWitness {
            k_start: k_abs - target.k0(),
            n,
            mu,
            window: (p_target.len() - from) as u32,
            windowed: true,
        },
        mu_star,
        epsilon,
        k_tilde,
        product_diffs,
        observed_mu,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Provenance {
    /// Stationary scheme with an exact contraction `‖(S_q)^n‖ < 1`.
    #[serde(rename = "theorem2")]
    Theorem2,
    /// Target and comparator are the same stationary scheme.
    #[serde(rename = "theorem2-degenerate")]
    Theorem2Degenerate,
    /// Contraction transferred from a stationary comparator by similarity.
    #[serde(rename = "theorem4")]
    Theorem4,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SupSource {
    Hint,
    Windowed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanMetadata {
    pub k_range: LevelRange,
    pub n_max: u32,
    #[serde(rename = "K_max")]
    pub k_max: u32,
    pub window: u32,
    pub tol: f64,
    pub epsilon: Option<f64>,
    pub k_tilde: Option<u32>,
    pub observed_mu: f64,
    pub sup_coeff: f64,
    pub sup_source: SupSource,
}

/// Convergence certificate: `‖S^∞ f − PL(f^{[k0+t]})‖ ≤ C μ̂^t ‖Δf^{[k0]}‖`,
/// with `‖Δf^{[k0+t]}‖ ≤ C₁ μ̂^t ‖Δf^{[k0]}‖` and
/// `‖F^{[k0+t+1]} − F^{[k0+t]}‖ ≤ Γ μ̂^t ‖Δf^{[k0]}‖`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceCertificate {
    pub target: String,
    pub comparator: Option<String>,
    pub k0: u32,
    #[serde(rename = "N")]
    pub locality: i64,
    pub mu_star: f64,
    pub n: u32,
    #[serde(rename = "K")]
    pub k_start: u32,
    pub mu: f64,
    pub mu_hat: f64,
    pub eta: f64,
    #[serde(rename = "C1")]
    pub c1: f64,
    #[serde(rename = "C2")]
    pub c2: f64,
    #[serde(rename = "Gamma")]
    pub gamma: f64,
    #[serde(rename = "C")]
    pub c: f64,
    pub holder_exponent: f64,
    pub provenance: Provenance,
    pub windowed: bool,
    pub scan: ScanMetadata,
}

impl ConvergenceCertificate {
    /// Bound on `‖Δf^{[k0+t]}‖` for initial differences of norm `delta0`.
    pub fn delta_bound(&self, t: u32, delta0: f64) -> f64 {
        self.c1 * self.mu_hat.powi(t as i32) * delta0
    }

    /// Bound on `‖F^{[k0+t+1]} − F^{[k0+t]}‖`.
    pub fn cauchy_bound(&self, t: u32, delta0: f64) -> f64 {
        self.gamma * self.mu_hat.powi(t as i32) * delta0
    }

    /// Bound on the distance from `PL(f^{[k0+t]})` to the limit function.
    pub fn limit_bound(&self, t: u32, delta0: f64) -> f64 {
        self.c * self.mu_hat.powi(t as i32) * delta0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CertifyOptions {
    pub search: SearchParams,
    /// Levels used for similarity and the transfer; defaults to
    /// `[k0, k0 + search.window]`.
    pub k_range: Option<LevelRange>,
    pub eta: Option<f64>,
    pub mu: Option<f64>,
}

impl CertifyOptions {
    fn range_for(&self, s: &SchemeSpec) -> Result<LevelRange> {
        match self.k_range {
            Some(r) => r.clip_to(s),
            None => LevelRange::new(s.k0(), s.k0() + self.search.window).and_then(|r| r.clip_to(s)),
        }
    }
}

/// Resolves `μ` from the user's `η` (giving `μ = η^n`) or `μ` override.
fn choose_mu(opts: &CertifyOptions, mu_star: f64, n: u32, default: f64) -> Result<f64> {
    if let Some(eta) = opts.eta {
        let lower = mu_star.powf(1.0 / n as f64);
        if !(eta > lower && eta < 1.0) {
            return Err(Error::EtaOutOfRange { eta, lower });
        }
        return Ok(eta.powi(n as i32));
    }
    Ok(opts.mu.unwrap_or(default))
}

struct Constants {
    mu_hat: f64,
    c1: f64,
    c2: f64,
    gamma: f64,
    c: f64,
    sup_coeff: f64,
    sup_source: SupSource,
}

fn assemble_constants(
    s: &SchemeSpec,
    k_start: u32,
    n: u32,
    mu: f64,
    range: LevelRange,
    tol: f64,
) -> Result<Constants> {
    let mu_hat = mu.powf(1.0 / n as f64);
    // C1 = mu_hat^{-(K+n-1)} max_{0 <= t <= K+n-1} ‖S_{q[k0+t-1]} ... S_{q[k0]}‖
    let top = k_start + n - 1;
    let qs = difference_masks(s, s.k0(), s.k0() + top, tol)?;
    let max_lead = (0..=top as usize)
        .map(|t| leading_product_norm(&qs[..t]))
        .fold(0.0, f64::max);
    let c1 = max_lead / mu_hat.powi(top as i32);
    let bounds = boundedness_estimate(s, range)?;
    let sup_source = if bounds.from_hint {
        SupSource::Hint
    } else {
        SupSource::Windowed
    };
    let locality = s.locality() as f64;
    let c2 = locality * (bounds.coeff_sup + 1.0);
    let gamma = locality * c1 * c2;
    let c = gamma / (1.0 - mu_hat);
    Ok(Constants {
        mu_hat,
        c1,
        c2,
        gamma,
        c,
        sup_coeff: bounds.coeff_sup,
        sup_source,
    })
}

/// Certificate for a stationary scheme from its exact contraction
/// `‖(S_q)^n‖ = μ < 1`.
pub fn certify_stationary(s: &SchemeSpec, opts: &CertifyOptions) -> Result<ConvergenceCertificate> {
    if !s.is_stationary() {
        return Err(Error::InvalidParameter(format!(
            "{} is not stationary; certify it against a stationary comparator",
            s.name()
        )));
    }
    let w = condition_a_search(s, &opts.search)?;
    let mu = choose_mu(opts, w.mu, w.n, w.mu)?;
    if !(mu >= w.mu && mu < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "mu = {mu} must lie in [mu* = {}, 1)",
            w.mu
        )));
    }
    let range = opts.range_for(s)?;
    let k = assemble_constants(s, 0, w.n, mu, range, opts.search.tol)?;
    Ok(ConvergenceCertificate {
        target: s.name().to_string(),
        comparator: None,
        k0: s.k0(),
        locality: s.locality(),
        mu_star: w.mu,
        n: w.n,
        k_start: 0,
        mu,
        mu_hat: k.mu_hat,
        eta: k.mu_hat,
        c1: k.c1,
        c2: k.c2,
        gamma: k.gamma,
        c: k.c,
        holder_exponent: k.mu_hat.log2().abs(),
        provenance: Provenance::Theorem2,
        windowed: false,
        scan: ScanMetadata {
            k_range: range,
            n_max: opts.search.n_max,
            k_max: opts.search.k_max,
            window: w.window,
            tol: opts.search.tol,
            epsilon: None,
            k_tilde: None,
            observed_mu: w.mu,
            sup_coeff: k.sup_coeff,
            sup_source: k.sup_source,
        },
    })
}

/// Certifies convergence of `target` by asymptotic similarity to a
/// stationary `comparator` whose difference scheme contracts.
pub fn certify_theorem4(
    target: &SchemeSpec,
    comparator: &SchemeSpec,
    opts: &CertifyOptions,
) -> Result<ConvergenceCertificate> {
    if !comparator.is_stationary() {
        return Err(Error::ComparatorNotStationary);
    }
    check_alignment(target, comparator)?;
    let range = opts.range_for(target)?;
    check_constants_on(target, range, opts.search.tol)?;
    let w_star = condition_a_search(comparator, &opts.search)?;
    let mu = choose_mu(opts, w_star.mu, w_star.n, (1.0 + w_star.mu) / 2.0)?;
    let transfer = transfer_condition_a(target, comparator, &w_star, range, opts.search.tol, Some(mu))?;
    let w = transfer.witness;
    let k = assemble_constants(target, w.k_start, w.n, w.mu, range, opts.search.tol)?;
    let degenerate = target.is_stationary() && target.mask_at(0)? == comparator.mask_at(0)?;
    let provenance = if degenerate {
        Provenance::Theorem2Degenerate
    } else {
        Provenance::Theorem4
    };
    let cert = ConvergenceCertificate {
        target: target.name().to_string(),
        comparator: Some(comparator.name().to_string()),
        k0: target.k0(),
        locality: target.locality(),
        mu_star: w_star.mu,
        n: w.n,
        k_start: w.k_start,
        mu: w.mu,
        mu_hat: k.mu_hat,
        eta: k.mu_hat,
        c1: k.c1,
        c2: k.c2,
        gamma: k.gamma,
        c: k.c,
        holder_exponent: k.mu_hat.log2().abs(),
        provenance,
        windowed: w.windowed,
        scan: ScanMetadata {
            k_range: range,
            n_max: opts.search.n_max,
            k_max: opts.search.k_max,
            window: w.window,
            tol: opts.search.tol,
            epsilon: Some(transfer.epsilon),
            k_tilde: Some(transfer.k_tilde),
            observed_mu: transfer.observed_mu,
            sup_coeff: k.sup_coeff,
            sup_source: k.sup_source,
        },
    };
    if !(cert.c.is_finite() && cert.c > 0.0 && cert.c1 > 0.0) {
        return Err(Error::Inconsistent(format!(
            "certificate constants are not finite and positive: C1 = {}, C = {}",
            cert.c1, cert.c
        )));
    }
    Ok(cert)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{chaikin, derham_nonstationary, derham_stationary, perturbed_chaikin, EpsSequence};
    use crate::mask::DEFAULT_TOL;

    fn derham_ns(gamma: f64, alpha: f64) -> SchemeSpec {
        derham_nonstationary(gamma, EpsSequence::AlphaOverK(alpha), 1).unwrap()
    }

    fn range(a: u32, b: u32) -> LevelRange {
        LevelRange::new(a, b).unwrap()
    }

    #[test]
    fn scheme_file_formats() {
        let s = SchemeSpec::from_json(
            r#"{"kind":"formula","name":"derham","params":{"gamma":2.0,"eps":"alpha_over_k","alpha":1.5},"k0":1,"N":2}"#,
        )
        .unwrap();
        assert_eq!(s.kind(), SchemeKind::Formula);
        assert_eq!(s.mask_at(5).unwrap(), derham_ns(2.0, 1.5).mask_at(5).unwrap());

        let s = SchemeSpec::from_json(
            r#"{"kind":"stationary","mask":{"base":-1,"coeffs":[0.25,0.75,0.75,0.25]},"N":2}"#,
        )
        .unwrap();
        assert_eq!(s.mask_at(9).unwrap(), chaikin().mask_at(0).unwrap());

        let s = SchemeSpec::from_json(
            r#"{"kind":"table","masks":[{"base":-1,"coeffs":[0.5,1.0,0.5]},{"base":-1,"coeffs":[0.25,0.75,0.75,0.25]}],"k0":3,"N":2}"#,
        )
        .unwrap();
        assert_eq!(s.last_level(), Some(4));
        assert!(matches!(s.mask_at(2), Err(Error::LevelOutOfRange { .. })));
        assert!(matches!(s.mask_at(5), Err(Error::LevelOutOfRange { .. })));

        let err = SchemeSpec::from_json(
            r#"{"kind":"stationary","mask":{"base":-3,"coeffs":[0.25,0.75,0.75,0.25]},"N":2}"#,
        )
        .unwrap_err();
        assert!(matches!(err, Error::SupportExceedsLocality { .. }));
        assert!(SchemeSpec::from_json(r#"{"kind":"spline"}"#).is_err());
    }

    #[test]
    fn boundedness() {
        let b = boundedness_estimate(&chaikin(), range(0, 10)).unwrap();
        assert_eq!((b.coeff_sup, b.operator_sup), (0.75, 1.0));

        let s = derham_ns(2.0, 2.5);
        let b = boundedness_estimate(&s, range(1, 64)).unwrap();
        assert!((b.coeff_sup - 5.5 / 6.5).abs() < 1e-15);
        let scan_only = SchemeSpec::formula("plain", Formula::DeRham { gamma: 2.0, eps: EpsSequence::AlphaOverK(2.5) }, 1, 2).unwrap();
        let b = boundedness_estimate(&scan_only, range(1, 64)).unwrap();
        assert!(!b.from_hint);
        assert!((b.coeff_sup - 5.5 / 6.5).abs() < 1e-15);

        let zero = SchemeSpec::stationary("zero", Mask::zero(), 1).unwrap();
        let b = boundedness_estimate(&zero, range(0, 4)).unwrap();
        assert_eq!((b.coeff_sup, b.operator_sup), (0.0, 0.0));
    }

    #[test]
    fn similarity_of_derham_family() {
        let (gamma, alpha) = (2.0, 1.5);
        let r = similarity_report(&derham_ns(gamma, alpha), &derham_stationary(gamma).unwrap(), range(1, 64), DEFAULT_TOL).unwrap();
        let (k, d) = r.per_k_diff[0];
        assert_eq!(k, 1);
        assert!((d - 1.5 / (5.5 * 4.0)).abs() < 1e-15);
        assert_eq!(r.similar_verdict, SimilarVerdict::Yes);
        assert_eq!(r.equivalent_verdict, EquivalentVerdict::NotSummableInWindow);
        let fit = r.decay_fit.unwrap();
        assert!((fit.exponent - 1.0).abs() < 0.05);
        assert!(r.partial_sums.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn similarity_reflexive_and_symmetric() {
        let r = similarity_report(&chaikin(), &chaikin(), range(0, 20), DEFAULT_TOL).unwrap();
        assert!(r.per_k_diff.iter().all(|p| p.1 == 0.0));
        assert_eq!(r.similar_verdict, SimilarVerdict::Yes);
        assert_eq!(r.equivalent_verdict, EquivalentVerdict::Summable);

        let a = derham_ns(1.5, 2.5);
        let b = derham_ns(1.5, -0.5);
        let ab = similarity_report(&a, &b, range(1, 40), DEFAULT_TOL).unwrap();
        let ba = similarity_report(&b, &a, range(1, 40), DEFAULT_TOL).unwrap();
        assert_eq!(ab.per_k_diff, ba.per_k_diff);
    }

    #[test]
    fn similarity_verdict_no_for_distinct_stationary() {
        let r = similarity_report(&chaikin(), &derham_stationary(1.0).unwrap(), range(0, 32), DEFAULT_TOL).unwrap();
        assert_eq!(r.similar_verdict, SimilarVerdict::No);
        assert_eq!(r.equivalent_verdict, EquivalentVerdict::NotSummableInWindow);
    }

    #[test]
    fn similarity_summable_perturbation() {
        let eps: Vec<f64> = (1..=64).map(|k| 0.5f64.powi(k)).collect();
        let s = derham_nonstationary(2.0, EpsSequence::Table(eps), 1).unwrap();
        let r = similarity_report(&s, &chaikin(), range(1, 64), DEFAULT_TOL).unwrap();
        assert_eq!(r.similar_verdict, SimilarVerdict::Yes);
        assert_eq!(r.equivalent_verdict, EquivalentVerdict::Summable);
    }

    #[test]
    fn similarity_alignment() {
        let err = similarity_report(&chaikin(), &crate::catalog::linear_bspline(), range(0, 20), DEFAULT_TOL).unwrap_err();
        assert!(matches!(err, Error::AlignmentMismatch { left: 2, right: 1 }));
        assert!(similarity_report(&chaikin(), &chaikin(), range(0, 3), DEFAULT_TOL).is_err());
    }

    #[test]
    fn sandwich_inequality_on_catalog() {
        let pairs = [
            (derham_ns(2.0, 1.5), chaikin()),
            (derham_ns(1.5, 2.5), derham_stationary(1.5).unwrap()),
            (derham_ns(1.0, -0.5), derham_ns(1.0, 0.5)),
        ];
        for (a, b) in pairs {
            let n = a.locality() as f64;
            for k in 1..=64 {
                let da = a.mask_at(k).unwrap().max_abs_diff(&b.mask_at(k).unwrap());
                let dq = a
                    .difference_mask_at(k, DEFAULT_TOL)
                    .unwrap()
                    .max_abs_diff(&b.difference_mask_at(k, DEFAULT_TOL).unwrap());
                assert!(0.5 * da <= dq + 1e-15 && dq <= 2.0 * n * da + 1e-15);
            }
        }
    }

    #[test]
    fn similarity_transitive_triangle() {
        let a = derham_ns(2.0, 2.5);
        let b = derham_ns(2.0, -1.5);
        let c = chaikin();
        let r = range(1, 64);
        let ab = similarity_report(&a, &b, r, DEFAULT_TOL).unwrap();
        let bc = similarity_report(&b, &c, r, DEFAULT_TOL).unwrap();
        let ac = similarity_report(&a, &c, r, DEFAULT_TOL).unwrap();
        for i in 0..ab.per_k_diff.len() {
            assert!(ac.per_k_diff[i].1 <= ab.per_k_diff[i].1 + bc.per_k_diff[i].1 + 1e-15);
        }
        assert!([ab, bc, ac].iter().all(|r| r.similar_verdict == SimilarVerdict::Yes));
    }

    #[test]
    fn transfer_derham_to_chaikin() {
        let target = derham_ns(2.0, 1.5);
        let comp = chaikin();
        let w_star = condition_a_search(&comp, &SearchParams::default()).unwrap();
        let t = transfer_condition_a(&target, &comp, &w_star, range(1, 65), DEFAULT_TOL, None).unwrap();
        assert_eq!(t.mu_star, 0.5);
        assert_eq!(t.witness.mu, 0.75);
        assert_eq!(t.epsilon, 0.125);
        // level 1 differs by 1.5/5.5 - 1/2 > 1/8, level 2 by 2*(1/4 - 1/4.75) < 1/8
        assert_eq!(t.k_tilde, 2);
        assert_eq!(t.witness.k_start, 1);
        assert!(t.witness.windowed);
        assert!(t.observed_mu <= 0.75);
        // product differences shrink along the tail
        let tail = &t.product_diffs[t.product_diffs.len() / 2..];
        assert!(tail.windows(2).all(|w| w[1].1 <= w[0].1));
    }

    #[test]
    fn transfer_identical_stationary() {
        let comp = chaikin();
        let w_star = condition_a_search(&comp, &SearchParams::default()).unwrap();
        let t = transfer_condition_a(&comp, &comp, &w_star, range(0, 20), DEFAULT_TOL, None).unwrap();
        assert_eq!(t.k_tilde, 0);
        assert_eq!(t.witness.k_start, 0);
        assert_eq!(t.witness.mu, 0.75);
    }

    #[test]
    fn transfer_rejects_non_reproducing_target_first() {
        let comp = chaikin();
        let w_star = condition_a_search(&comp, &SearchParams::default()).unwrap();
        let err = transfer_condition_a(&perturbed_chaikin(), &comp, &w_star, range(1, 64), DEFAULT_TOL, None).unwrap_err();
        assert!(matches!(err, Error::NotConstantReproducing { level: 1, .. }));
    }

    #[test]
    fn transfer_requires_similarity() {
        let comp = chaikin();
        let w_star = condition_a_search(&comp, &SearchParams::default()).unwrap();
        let target = derham_stationary(1.0).unwrap();
        let err = transfer_condition_a(&target, &comp, &w_star, range(0, 32), DEFAULT_TOL, None).unwrap_err();
        assert!(matches!(err, Error::SimilarityNotEstablished { .. }));
        assert!(err.is_inconclusive());
    }

    #[test]
    fn transfer_tail_not_reached() {
        // similar, but within 12 levels the product differences never drop
        // below epsilon when mu is pushed close to mu*
        let comp = chaikin();
        let w_star = condition_a_search(&comp, &SearchParams::default()).unwrap();
        let target = derham_ns(2.0, 40.0);
        let err = transfer_condition_a(&target, &comp, &w_star, range(1, 12), DEFAULT_TOL, Some(0.5001)).unwrap_err();
        assert!(matches!(err, Error::TailNotReached { .. }));
    }

    #[test]
    fn certificate_chaikin_degenerate() {
        let c = chaikin();
        let cert = certify_theorem4(&c, &c, &CertifyOptions::default()).unwrap();
        assert_eq!(cert.provenance, Provenance::Theorem2Degenerate);
        assert_eq!((cert.n, cert.k_start), (1, 0));
        assert_eq!(cert.mu_hat, 0.75);
        assert_eq!(cert.c1, 1.0);
        assert_eq!(cert.c2, 2.0 * 1.75);
        assert_eq!(cert.gamma, 2.0 * 1.0 * 3.5);
        assert_eq!(cert.c, cert.gamma / 0.25);
        assert!((cert.holder_exponent - (4.0f64 / 3.0).log2()).abs() < 1e-15);

        let opts = CertifyOptions {
            mu: Some(0.5),
            ..Default::default()
        };
        let cert = certify_theorem4(&c, &c, &opts).unwrap();
        assert_eq!(cert.holder_exponent, 1.0);
    }

    #[test]
    fn certificate_stationary_route() {
        let cert = certify_stationary(&chaikin(), &CertifyOptions::default()).unwrap();
        assert_eq!(cert.provenance, Provenance::Theorem2);
        assert_eq!((cert.mu, cert.mu_hat, cert.holder_exponent), (0.5, 0.5, 1.0));
        assert!(!cert.windowed);
        assert!(certify_stationary(&derham_ns(2.0, 1.0), &CertifyOptions::default()).is_err());
    }

    #[test]
    fn certificate_derham_nonstationary() {
        let gamma = 1.5;
        let cert = certify_theorem4(&derham_ns(gamma, 2.5), &derham_stationary(gamma).unwrap(), &CertifyOptions::default()).unwrap();
        assert!((cert.mu_star - 4.0 / 7.0).abs() < 1e-15);
        assert_eq!(cert.provenance, Provenance::Theorem4);
        assert!(cert.windowed);
        assert!(cert.k_start <= 64);
        assert!((cert.c - cert.gamma / (1.0 - cert.mu_hat)).abs() == 0.0);
        assert!((cert.mu_hat.powi(cert.n as i32) - cert.mu).abs() < 1e-12);
        assert!(cert.eta > cert.mu_star.powf(1.0 / cert.n as f64) && cert.eta < 1.0);
        assert_eq!(cert.scan.sup_source, SupSource::Hint);
    }

    #[test]
    fn certificate_eta_handling() {
        let target = derham_ns(2.0, 1.5);
        let comp = chaikin();
        let opts = CertifyOptions {
            eta: Some(0.9),
            ..Default::default()
        };
        let cert = certify_theorem4(&target, &comp, &opts).unwrap();
        assert!((cert.mu - 0.9).abs() < 1e-15 && (cert.eta - 0.9).abs() < 1e-15);
        for eta in [0.5, 0.3, 1.0, 1.2] {
            let opts = CertifyOptions {
                eta: Some(eta),
                ..Default::default()
            };
            assert!(matches!(certify_theorem4(&target, &comp, &opts), Err(Error::EtaOutOfRange { .. })));
        }
    }

    #[test]
    fn certificate_preconditions() {
        let err = certify_theorem4(&perturbed_chaikin(), &chaikin(), &CertifyOptions::default()).unwrap_err();
        assert_eq!(err.reason(), "NotConstantReproducing");
        let err = certify_theorem4(&chaikin(), &derham_ns(2.0, 1.0), &CertifyOptions::default()).unwrap_err();
        assert_eq!(err, Error::ComparatorNotStationary);
    }

    #[test]
    fn long_products_are_bounded_blockwise() {
        let q = chaikin().difference_mask_at(0, DEFAULT_TOL).unwrap();
        let qs = vec![q; 40];
        let b = leading_product_norm(&qs);
        // 0.5^16 * 0.5^16 * 0.5^8: exact per block, product across blocks
        assert!((b - 0.5f64.powi(40)).abs() < 1e-25);
    }
}
