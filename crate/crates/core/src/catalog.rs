//! Built-in schemes: linear B-spline, Chaikin, the de Rham corner-cutting
//! family (stationary and with level-dependent ratio `γ_k = γ + ε_k`) and the
//! perturbed Chaikin scheme that fails to reproduce constants.
//!
//! All four-coefficient masks are stored at base −1, so that masks of
//! different schemes line up index by index when subtracted.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::{linear_bspline_mask, Mask};
use crate::scheme::SchemeSpec;

/// Base index shared by the four-point catalog masks.
pub const CORNER_CUTTING_BASE: i64 = -1;

/// Perturbation sequence `ε_k` of the non-stationary de Rham ratio.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum EpsSequence {
    /// `ε_k = α / k`.
    AlphaOverK(f64),
    /// Explicit values; entry `p` is `ε_{k0 + p}`.
    Table(Vec<f64>),
}

impl EpsSequence {
    pub fn at(&self, k: u32, k0: u32) -> Result<f64> {
        match self {
            EpsSequence::AlphaOverK(alpha) => {
                if k == 0 {
                    return Err(Error::InvalidParameter(
                        "eps_k = alpha / k is undefined at k = 0".into(),
                    ));
                }
                Ok(alpha / k as f64)
            }
            EpsSequence::Table(values) => values
                .get((k - k0) as usize)
                .copied()
                .ok_or(Error::LevelOutOfRange {
                    level: k,
                    first: k0,
                    last: Some(k0 + values.len() as u32 - 1),
                }),
        }
    }

    fn last_level(&self, k0: u32) -> Option<u32> {
        match self {
            EpsSequence::AlphaOverK(_) => None,
            EpsSequence::Table(values) => Some(k0 + values.len() as u32 - 1),
        }
    }

    /// Largest `ε_k` over `k ≥ k0`, counting the limit 0.
    fn sup(&self, k0: u32) -> f64 {
        match self {
            EpsSequence::AlphaOverK(alpha) => (alpha / k0.max(1) as f64).max(0.0),
            EpsSequence::Table(values) => values.iter().copied().fold(0.0, f64::max),
        }
    }
}

/// Level-dependent mask families evaluated in closed form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Formula {
    DeRham { gamma: f64, eps: EpsSequence },
    /// `{1/4 + 1/k, 3/4 + 1/k, 3/4 + 1/k, 1/4 + 1/k}`.
    PerturbedChaikin,
}

impl Formula {
    pub fn mask_at(&self, k: u32, k0: u32) -> Result<Mask> {
        match self {
            Formula::DeRham { gamma, eps } => {
                let gamma_k = gamma + eps.at(k, k0)?;
                // gamma_k = 0 puts both new points at the segment midpoint
                if !(gamma_k >= 0.0) {
                    return Err(Error::InvalidParameter(format!(
                        "gamma_{k} = {gamma_k} must be non-negative"
                    )));
                }
                Ok(derham_mask(gamma_k))
            }
            Formula::PerturbedChaikin => {
                if k == 0 {
                    return Err(Error::InvalidParameter(
                        "perturbed Chaikin mask is undefined at k = 0".into(),
                    ));
                }
                let e = 1.0 / k as f64;
                Ok(Mask::new(
                    CORNER_CUTTING_BASE,
                    vec![0.25 + e, 0.75 + e, 0.75 + e, 0.25 + e],
                ))
            }
        }
    }

    pub fn last_level(&self, k0: u32) -> Option<u32> {
        match self {
            Formula::DeRham { eps, .. } => eps.last_level(k0),
            Formula::PerturbedChaikin => None,
        }
    }
}

/// Closed-form facts about a catalog scheme that finite scans cannot prove.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AnalyticFlags {
    /// The perturbation tends to zero.
    pub eps_is_o1: bool,
    /// The perturbation is summable over `k`.
    pub eps_summable: bool,
    /// Known `sup_k ‖a^{[k]}‖` (coefficient sup-norm).
    pub sup_bound: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct CatalogEntry {
    pub name: String,
    pub params: BTreeMap<String, f64>,
    pub spec: SchemeSpec,
    pub flags: AnalyticFlags,
}

/// De Rham mask `{1, 1 + γ, 1 + γ, 1} / (2 + γ)` at base −1.
pub fn derham_mask(gamma: f64) -> Mask {
    let s = 2.0 + gamma;
    let inner = (1.0 + gamma) / s;
    Mask::new(CORNER_CUTTING_BASE, vec![1.0 / s, inner, inner, 1.0 / s])
}

pub fn linear_bspline() -> SchemeSpec {
    SchemeSpec::stationary("linear_bspline", linear_bspline_mask(), 1)
        .expect("catalog mask within locality")
        .with_flags(AnalyticFlags {
            eps_is_o1: true,
            eps_summable: true,
            sup_bound: Some(1.0),
        })
}

pub fn chaikin() -> SchemeSpec {
    SchemeSpec::stationary(
        "chaikin",
        Mask::new(CORNER_CUTTING_BASE, vec![0.25, 0.75, 0.75, 0.25]),
        2,
    )
    .expect("catalog mask within locality")
    .with_flags(AnalyticFlags {
        eps_is_o1: true,
        eps_summable: true,
        sup_bound: Some(0.75),
    })
}

pub fn derham_stationary(gamma: f64) -> Result<SchemeSpec> {
    if !(gamma > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "gamma = {gamma} must be positive"
        )));
    }
    let sup = (1.0 + gamma) / (2.0 + gamma);
    Ok(
        SchemeSpec::stationary(format!("derham_stationary(gamma={gamma})"), derham_mask(gamma), 2)?
            .with_flags(AnalyticFlags {
                eps_is_o1: true,
                eps_summable: true,
                sup_bound: Some(sup),
            }),
    )
}

/// De Rham scheme with ratio `γ_k = γ + ε_k` from level `k0` on. The ratio
/// is validated lazily at each queried level.
pub fn derham_nonstationary(gamma: f64, eps: EpsSequence, k0: u32) -> Result<SchemeSpec> {
    if !(gamma > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "gamma = {gamma} must be positive"
        )));
    }
    let (name, summable) = match &eps {
        EpsSequence::AlphaOverK(alpha) => (
            format!("derham(gamma={gamma},eps=alpha_over_k,alpha={alpha})"),
            *alpha == 0.0,
        ),
        // a finite table is trivially summable
        EpsSequence::Table(v) => (format!("derham(gamma={gamma},eps=table[{}])", v.len()), true),
    };
    // (1 + g) / (2 + g) increases with g, so the sup sits at the largest ratio.
    let gamma_max = gamma + eps.sup(k0);
    let sup = (1.0 + gamma_max) / (2.0 + gamma_max);
    let flags = AnalyticFlags {
        eps_is_o1: true,
        eps_summable: summable,
        sup_bound: Some(sup),
    };
    Ok(SchemeSpec::formula(name, Formula::DeRham { gamma, eps }, k0, 2)?.with_flags(flags))
}

pub fn perturbed_chaikin() -> SchemeSpec {
    SchemeSpec::formula("perturbed_chaikin", Formula::PerturbedChaikin, 1, 2)
        .expect("catalog locality")
        .with_flags(AnalyticFlags {
            eps_is_o1: true,
            eps_summable: false,
            sup_bound: Some(1.75),
        })
}

fn param(params: &BTreeMap<String, f64>, key: &str) -> Result<f64> {
    params
        .get(key)
        .copied()
        .ok_or_else(|| Error::InvalidParameter(format!("missing parameter `{key}`")))
}

/// Resolves a catalog name with numeric parameters.
///
/// Names: `linear_bspline`, `chaikin`, `perturbed_chaikin`,
/// `derham_stationary` (`gamma`), `derham_nonstationary` and `derham`
/// (`gamma`, optional `alpha` for `ε_k = α/k`, optional `k0`). `derham`
/// without `alpha` is stationary.
pub fn lookup(name: &str, params: &BTreeMap<String, f64>) -> Result<CatalogEntry> {
    let k0 = match params.get("k0") {
        Some(&v) if v >= 0.0 && v.fract() == 0.0 => Some(v as u32),
        Some(&v) => return Err(Error::InvalidParameter(format!("k0 = {v} is not a level"))),
        None => None,
    };
    let spec = match name {
        "linear_bspline" => linear_bspline(),
        "chaikin" => chaikin(),
        "perturbed_chaikin" => perturbed_chaikin(),
        "derham_stationary" => derham_stationary(param(params, "gamma")?)?,
        "derham" if !params.contains_key("alpha") => derham_stationary(param(params, "gamma")?)?,
        "derham" | "derham_nonstationary" => derham_nonstationary(
            param(params, "gamma")?,
            EpsSequence::AlphaOverK(param(params, "alpha")?),
            k0.unwrap_or(1),
        )?,
        other => {
            return Err(Error::InvalidParameter(format!(
                "unknown catalog scheme `{other}`"
            )))
        }
    };
    let flags = spec.flags().unwrap_or_default();
    Ok(CatalogEntry {
        name: name.to_string(),
        params: params.clone(),
        spec,
        flags,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mask::DEFAULT_TOL;

    const LEVELS: [u32; 5] = [1, 2, 5, 17, 64];

    #[test]
    fn linear_bspline_entry() {
        let s = linear_bspline();
        let h = s.mask_at(0).unwrap();
        assert!(h.reproduces_constants(DEFAULT_TOL));
        assert_eq!(h.difference_mask(DEFAULT_TOL).unwrap(), Mask::new(-1, vec![0.5, 0.5]));
        assert_eq!(h.sup_norm(), 1.0);
        assert_eq!(s.locality(), 1);
    }

    #[test]
    fn chaikin_entry() {
        let s = chaikin();
        let a = s.mask_at(3).unwrap();
        assert_eq!(a.base(), -1);
        assert_eq!(
            a.difference_mask(DEFAULT_TOL).unwrap(),
            Mask::new(-1, vec![0.25, 0.5, 0.25])
        );
        assert_eq!(a.difference_mask(DEFAULT_TOL).unwrap().sup_norm(), 0.5);
        assert_eq!(a, derham_stationary(2.0).unwrap().mask_at(0).unwrap());
    }

    #[test]
    fn derham_stationary_entry() {
        for gamma in [0.5, 1.0, 1.5, 2.0, 4.0] {
            let a = derham_stationary(gamma).unwrap().mask_at(7).unwrap();
            assert!((a.symbol(1.0) - 2.0).abs() < 1e-15);
            let q = a.difference_mask(DEFAULT_TOL).unwrap();
            assert!((q.sup_norm() - gamma.max(2.0) / (2.0 + gamma)).abs() < 1e-15);
        }
        assert!(derham_stationary(0.0).is_err());
        assert!(derham_stationary(-1.0).is_err());
    }

    #[test]
    fn derham_golden_values() {
        let (gamma, alpha) = (2.0, 1.5);
        let s = derham_nonstationary(gamma, EpsSequence::AlphaOverK(alpha), 1).unwrap();
        let a1 = s.mask_at(1).unwrap();
        let expect = Mask::new(-1, vec![1.0 / 5.5, 4.5 / 5.5, 4.5 / 5.5, 1.0 / 5.5]);
        assert!(a1.max_abs_diff(&expect) < 1e-16);
        let stat = derham_stationary(gamma).unwrap().mask_at(0).unwrap();
        for k in LEVELS {
            let gk = gamma + alpha / k as f64;
            let a = s.mask_at(k).unwrap();
            assert_eq!(a.coeffs(), &[1.0 / (2.0 + gk), (1.0 + gk) / (2.0 + gk), (1.0 + gk) / (2.0 + gk), 1.0 / (2.0 + gk)]);
            let eps = alpha / k as f64;
            let expected_diff = eps / ((2.0 + gk) * (2.0 + gamma));
            for i in -1..=2 {
                assert!(((a.coeff(i) - stat.coeff(i)).abs() - expected_diff).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn derham_alpha_zero_is_bitwise_stationary() {
        for gamma in [0.5, 1.5, 2.0, 3.3] {
            let s = derham_nonstationary(gamma, EpsSequence::AlphaOverK(0.0), 1).unwrap();
            let t = derham_stationary(gamma).unwrap();
            for k in LEVELS {
                let a = s.mask_at(k).unwrap();
                let b = t.mask_at(k).unwrap();
                assert_eq!(a.base(), b.base());
                assert!(a.coeffs().iter().zip(b.coeffs()).all(|(x, y)| x.to_bits() == y.to_bits()));
            }
        }
    }

    #[test]
    fn derham_invalid_ratio_is_lazy() {
        let s = derham_nonstationary(1.0, EpsSequence::AlphaOverK(-2.5), 1).unwrap();
        assert!(matches!(s.mask_at(1), Err(Error::InvalidParameter(_))));
        assert!(matches!(s.mask_at(2), Err(Error::InvalidParameter(_))));
        assert!(s.mask_at(3).is_ok());

        let s = derham_nonstationary(1.5, EpsSequence::AlphaOverK(-1.5), 1).unwrap();
        assert_eq!(s.mask_at(1).unwrap(), Mask::new(-1, vec![0.5; 4]));
    }

    #[test]
    fn eps_table() {
        let s = derham_nonstationary(2.0, EpsSequence::Table(vec![1.0, 0.5, 0.25]), 1).unwrap();
        assert_eq!(s.last_level(), Some(3));
        assert_eq!(s.mask_at(2).unwrap(), derham_mask(2.5));
        assert!(matches!(s.mask_at(4), Err(Error::LevelOutOfRange { .. })));
    }

    #[test]
    fn perturbed_chaikin_entry() {
        let s = perturbed_chaikin();
        assert_eq!(s.k0(), 1);
        for k in LEVELS {
            let a = s.mask_at(k).unwrap();
            let e = 1.0 / k as f64;
            assert_eq!(a.coeffs(), &[0.25 + e, 0.75 + e, 0.75 + e, 0.25 + e]);
            for sum in a.residue_sums(2) {
                assert!((sum - (1.0 + 2.0 * e)).abs() < 1e-12);
            }
            let c = chaikin().mask_at(k).unwrap();
            assert!((a.max_abs_diff(&c) - e).abs() < 1e-15);
        }
        assert!(!s.mask_at(4).unwrap().reproduces_constants(DEFAULT_TOL));
    }

    #[test]
    fn sup_bounds_dominate_scans() {
        for (s, alpha) in [
            (derham_nonstationary(2.0, EpsSequence::AlphaOverK(2.5), 1).unwrap(), 2.5),
            (derham_nonstationary(1.5, EpsSequence::AlphaOverK(-1.5), 1).unwrap(), -1.5),
        ] {
            let bound = s.bound_hint().unwrap();
            let scanned = (1..=200).map(|k| s.mask_at(k).unwrap().coeff_sup()).fold(0.0, f64::max);
            assert!(scanned <= bound + 1e-15, "alpha {alpha}");
        }
        let s = derham_nonstationary(2.0, EpsSequence::AlphaOverK(2.5), 1).unwrap();
        assert!((s.bound_hint().unwrap() - 5.5 / 6.5).abs() < 1e-15);
    }

    #[test]
    fn lookup_names() {
        let mut p = BTreeMap::new();
        assert_eq!(lookup("chaikin", &p).unwrap().spec.mask_at(0).unwrap(), chaikin().mask_at(0).unwrap());
        assert!(lookup("derham", &p).is_err());
        p.insert("gamma".to_string(), 2.0);
        assert!(lookup("derham", &p).unwrap().spec.is_stationary());
        p.insert("alpha".to_string(), 1.5);
        let e = lookup("derham", &p).unwrap();
        assert!(!e.spec.is_stationary());
        assert!(e.flags.eps_is_o1 && !e.flags.eps_summable);
        assert!(lookup("four_point", &p).is_err());
    }
}
