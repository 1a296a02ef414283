//! Refinement engine: iterates level masks on finite data and measures how
//! fast the piecewise-linear interpolants settle.
//!
//! Level-`k` value `f_i` sits at `x = i · 2^{-k}`. Each step keeps only the
//! values fully determined by the current window, so the valid interval
//! shrinks deterministically and no boundary data is ever invented.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::{linear_bspline_mask, DEFAULT_TOL};
use crate::operator::{apply, Window};
use crate::scheme::{ConvergenceCertificate, SchemeSpec};

/// Tolerance of the per-step check `Δ(S_a f) = S_q Δf`.
pub const COMMUTATION_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct RefinementState {
    level: u32,
    values: Window,
    deltas: Window,
}

impl RefinementState {
    pub fn new(level: u32, values: Window) -> Self {
        let deltas = values.differences();
        RefinementState {
            level,
            values,
            deltas,
        }
    }

    /// `δ` at index 0 of level `level`, padded with `pad` zeros per side.
    pub fn delta(level: u32, pad: usize) -> Self {
        Self::new(level, Window::delta(pad))
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn values(&self) -> &Window {
        &self.values
    }

    pub fn deltas(&self) -> &Window {
        &self.deltas
    }

    pub fn grid_scale(&self) -> f64 {
        0.5f64.powi(self.level as i32)
    }

    pub fn x_of(&self, i: i64) -> f64 {
        i as f64 * self.grid_scale()
    }

    /// `[x_lo, x_hi]` covered by the valid interval.
    pub fn x_span(&self) -> (f64, f64) {
        (self.x_of(self.values.lo()), self.x_of(self.values.hi()))
    }

    pub fn pl(&self) -> PLFunction<'_> {
        PLFunction {
            level: self.level,
            samples: &self.values,
        }
    }

    /// `(x_i, f_i)` over the valid interval.
    pub fn samples(&self) -> Vec<(f64, f64)> {
        self.values.iter().map(|(i, v)| (self.x_of(i), v)).collect()
    }
}

/// Piecewise-linear interpolant of level-`k` data.
#[derive(Debug, Clone, Copy)]
pub struct PLFunction<'a> {
    pub level: u32,
    pub samples: &'a Window,
}

impl PLFunction<'_> {
    pub fn eval(&self, x: f64) -> Result<f64> {
        pl_eval(self, x)
    }
}

pub fn pl_eval(f: &PLFunction<'_>, x: f64) -> Result<f64> {
    let scale = 2f64.powi(f.level as i32);
    let (lo, hi) = (f.samples.lo(), f.samples.hi());
    let t = x * scale;
    if f.samples.is_empty() || !(t >= lo as f64 && t <= hi as f64) {
        return Err(Error::OutOfDomain {
            x,
            lo: lo as f64 / scale,
            hi: hi as f64 / scale,
        });
    }
    let i = (t.floor() as i64).min(hi);
    let frac = t - i as f64;
    let left = f.samples.get(i).unwrap();
    if frac == 0.0 {
        return Ok(left);
    }
    let right = f.samples.get(i + 1).unwrap();
    Ok(left + frac * (right - left))
}

/// One refinement step with the mask of the state's level. When that mask
/// reproduces constants, the new differences are checked against the
/// difference scheme applied to the old ones.
pub fn refine_once(state: &RefinementState, s: &SchemeSpec) -> Result<RefinementState> {
    if state.level < s.k0() {
        return Err(Error::LevelOutOfRange {
            level: state.level,
            first: s.k0(),
            last: s.last_level(),
        });
    }
    let mask = s.mask_at(state.level)?;
    let next = RefinementState::new(state.level + 1, apply(&mask, &state.values)?);
    if mask.reproduces_constants(DEFAULT_TOL) && !state.deltas.is_empty() {
        let q = mask.difference_mask(DEFAULT_TOL)?;
        if let Ok(via_q) = apply(&q, &state.deltas) {
            if let Some(err) = next.deltas.max_abs_diff(&via_q) {
                if err > COMMUTATION_TOL {
                    return Err(Error::Inconsistent(format!(
                        "level {}: differences disagree with the difference scheme by {err:e}",
                        state.level
                    )));
                }
            }
        }
    }
    Ok(next)
}

/// `max |F^{[k+1]}(x) − F^{[k]}(x)|` over the common domain, evaluated at
/// the level-`(k+1)` breakpoints. Also returns the refined state.
pub fn cauchy_step(s: &SchemeSpec, state: &RefinementState) -> Result<(f64, RefinementState)> {
    let next = refine_once(state, s)?;
    // F^{[k]} at the fine breakpoints is S_h f^{[k]}
    let coarse_on_fine = apply(&linear_bspline_mask(), &state.values)?;
    let norm = next
        .values
        .max_abs_diff(&coarse_on_fine)
        .ok_or(Error::EmptyOutput {
            lo: next.values.lo(),
            hi: next.values.hi(),
        })?;
    Ok((norm, next))
}

pub fn cauchy_norm(s: &SchemeSpec, state: &RefinementState) -> Result<f64> {
    cauchy_step(s, state).map(|(n, _)| n)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayRow {
    pub level: u32,
    /// Steps since the initial data.
    pub step: u32,
    pub delta_norm: f64,
    /// `‖F^{[k+1]} − F^{[k]}‖` for this level.
    pub cauchy_norm: f64,
    pub delta_bound: Option<f64>,
    pub cauchy_bound: Option<f64>,
}

impl DecayRow {
    /// `bound − measured` for both inequalities (`None` without a certificate).
    pub fn margins(&self) -> Option<(f64, f64)> {
        Some((
            self.delta_bound? - self.delta_norm,
            self.cauchy_bound? - self.cauchy_norm,
        ))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayReport {
    pub scheme: String,
    pub rows: Vec<DecayRow>,
    /// Fitted per-level factor of the Cauchy differences.
    pub rho_emp: f64,
    /// Fitted per-level factor of `‖Δf^{[k]}‖`.
    pub rho_delta: f64,
    pub contractive: bool,
    /// Smallest margin over both certified inequalities, when certified.
    pub min_margin: Option<f64>,
}

/// Least-squares slope of `ln y` against the step index, as a factor per step.
fn fit_rate(ys: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = ys
        .iter()
        .enumerate()
        .filter(|(_, &y)| y > 0.0)
        .map(|(t, &y)| (t as f64, y.ln()))
        .collect();
    if pts.len() < 2 {
        return if ys.iter().all(|&y| y == 0.0) { 0.0 } else { f64::NAN };
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxy / sxx).exp()
}

/// Tabulates `‖Δf^{[k]}‖` and the Cauchy differences over `steps` levels and
/// fits decay rates over the last half. With a certificate the certified
/// bounds are evaluated level by level.
pub fn decay_report(
    s: &SchemeSpec,
    f0: &RefinementState,
    steps: u32,
    certificate: Option<&ConvergenceCertificate>,
) -> Result<DecayReport> {
    if steps < 4 {
        return Err(Error::InvalidParameter(format!(
            "decay report needs at least 4 levels, got {steps}"
        )));
    }
    let delta0 = f0.deltas.max_abs();
    let cert_offset = certificate.map(|c| f0.level.checked_sub(c.k0));
    if let Some(None) = cert_offset {
        return Err(Error::InvalidParameter(
            "initial data precedes the certificate's first level".into(),
        ));
    }
    let mut rows = Vec::with_capacity(steps as usize);
    let mut state = f0.clone();
    for step in 0..steps {
        let delta_norm = state.deltas.max_abs();
        let (cauchy, next) = cauchy_step(s, &state)?;
        // bounds are stated relative to data at the certificate's k0
        let (delta_bound, cauchy_bound) = match (certificate, cert_offset.flatten()) {
            (Some(c), Some(0)) => (
                Some(c.delta_bound(step, delta0)),
                Some(c.cauchy_bound(step, delta0)),
            ),
            _ => (None, None),
        };
        rows.push(DecayRow {
            level: state.level,
            step,
            delta_norm,
            cauchy_norm: cauchy,
            delta_bound,
            cauchy_bound,
        });
        state = next;
    }
    let half = rows.len() / 2;
    let cauchy: Vec<f64> = rows[half..].iter().map(|r| r.cauchy_norm).collect();
    let deltas: Vec<f64> = rows[half..].iter().map(|r| r.delta_norm).collect();
    let rho_emp = fit_rate(&cauchy);
    let rho_delta = fit_rate(&deltas);
    let min_margin = rows
        .iter()
        .filter_map(DecayRow::margins)
        .map(|(a, b)| a.min(b))
        .reduce(f64::min);
    Ok(DecayReport {
        scheme: s.name().to_string(),
        rows,
        rho_emp,
        rho_delta,
        contractive: rho_emp < 1.0,
        min_margin,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitSamples {
    pub level: u32,
    pub points: Vec<(f64, f64)>,
    /// Guaranteed sup-distance to the limit function, when certified.
    pub bound: Option<f64>,
}

/// Refines `f0` up to level `level` and returns the samples on `2^{-level}ℤ`.
pub fn limit_sample(
    s: &SchemeSpec,
    f0: &RefinementState,
    level: u32,
    certificate: Option<&ConvergenceCertificate>,
) -> Result<LimitSamples> {
    if level <= f0.level {
        return Err(Error::InvalidParameter(format!(
            "target level {level} must exceed the initial level {}",
            f0.level
        )));
    }
    let mut state = f0.clone();
    while state.level < level {
        state = refine_once(&state, s)?;
    }
    let bound = certificate.and_then(|c| {
        let off = f0.level.checked_sub(c.k0)?;
        (off == 0).then(|| c.limit_bound(level - f0.level, f0.deltas.max_abs()))
    });
    Ok(LimitSamples {
        level,
        points: state.samples(),
        bound,
    })
}

/// Runs `steps` refinements, keeping every intermediate state.
pub fn trace(s: &SchemeSpec, f0: &RefinementState, steps: u32) -> Result<Vec<RefinementState>> {
    let mut out = vec![f0.clone()];
    for _ in 0..steps {
        let next = refine_once(out.last().unwrap(), s)?;
        out.push(next);
    }
    Ok(out)
}

/// Zero padding per side of an initial `δ` so that the support of every
/// refinement stays inside the valid interval for masks in `[-N, N]`: the
/// valid x-span loses less than `2N` initial grid cells per side in total.
pub fn delta_padding(locality: i64) -> usize {
    (2 * locality + 2) as usize
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{self, EpsSequence};

    #[test]
    fn chaikin_from_delta() {
        let s = catalog::chaikin();
        let next = refine_once(&RefinementState::delta(0, 3), &s).unwrap();
        assert_eq!(next.level(), 1);
        for (i, c) in [(-1, 0.25), (0, 0.75), (1, 0.75), (2, 0.25), (3, 0.0), (-2, 0.0)] {
            assert_eq!(next.values().get(i), Some(c));
        }
    }

    #[test]
    fn constants_stay_constant() {
        let schemes = [
            catalog::chaikin(),
            catalog::linear_bspline(),
            catalog::derham_stationary(0.8).unwrap(),
            catalog::derham_nonstationary(2.0, EpsSequence::AlphaOverK(1.5), 1).unwrap(),
        ];
        for s in &schemes {
            let mut st = RefinementState::new(s.k0(), Window::constant(-20, 41, 1.0));
            for _ in 0..6 {
                st = refine_once(&st, s).unwrap();
                assert!(st.values().values().iter().all(|v| (v - 1.0).abs() <= 1e-14));
            }
        }
    }

    #[test]
    fn perturbed_chaikin_scales_constants() {
        let s = catalog::perturbed_chaikin();
        let st = refine_once(&RefinementState::new(1, Window::constant(-5, 11, 1.0)), &s).unwrap();
        assert!(st.values().values().iter().all(|&v| (v - 3.0).abs() < 1e-15));
    }

    #[test]
    fn valid_interval_shrinks() {
        for s in [catalog::chaikin(), catalog::linear_bspline(), catalog::perturbed_chaikin()] {
            let mut st = RefinementState::delta(s.k0(), 6);
            for _ in 0..8 {
                let next = refine_once(&st, &s).unwrap();
                let (a, b) = st.x_span();
                let (c, d) = next.x_span();
                assert!(a <= c && d <= b);
                st = next;
            }
        }
    }

    #[test]
    fn pl_evaluation() {
        let w = Window::new(-1, vec![0.25, 0.75, 0.75, 0.25]);
        let f = PLFunction { level: 1, samples: &w };
        assert_eq!(pl_eval(&f, 0.5).unwrap(), 0.75);
        assert_eq!(pl_eval(&f, 0.25).unwrap(), 0.75);
        assert_eq!(pl_eval(&f, -0.25).unwrap(), 0.5);
        assert_eq!(pl_eval(&f, 1.0).unwrap(), 0.25);
        assert!(matches!(pl_eval(&f, 1.01), Err(Error::OutOfDomain { .. })));
        assert!(matches!(pl_eval(&f, -0.6), Err(Error::OutOfDomain { .. })));

        let w = Window::new(0, vec![2.0, 4.0]);
        let f = PLFunction { level: 0, samples: &w };
        assert_eq!(pl_eval(&f, 0.5).unwrap(), 3.0);
    }

    /// Brute-force oracle: sample both interpolants on a very fine grid.
    fn brute_cauchy(coarse: &RefinementState, fine: &RefinementState) -> f64 {
        let (a, b) = coarse.x_span();
        let (c, d) = fine.x_span();
        let (lo, hi) = (a.max(c), b.min(d));
        let step = fine.grid_scale() / 64.0;
        let n = ((hi - lo) / step).round() as i64;
        (0..=n)
            .map(|t| lo + step * t as f64)
            .map(|x| (fine.pl().eval(x).unwrap() - coarse.pl().eval(x).unwrap()).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn cauchy_norm_matches_sampling() {
        let s = catalog::chaikin();
        let st = RefinementState::delta(0, 3);
        let (c, next) = cauchy_step(&s, &st).unwrap();
        assert_eq!(c, 0.25);
        assert!((brute_cauchy(&st, &next) - c).abs() < 1e-12);

        let s = catalog::derham_nonstationary(1.5, EpsSequence::AlphaOverK(2.5), 1).unwrap();
        let mut st = RefinementState::delta(1, 4);
        for _ in 0..4 {
            let (c, next) = cauchy_step(&s, &st).unwrap();
            assert!((brute_cauchy(&st, &next) - c).abs() < 1e-12);
            st = next;
        }
    }

    #[test]
    fn cauchy_norm_zero_for_constants() {
        let st = RefinementState::new(0, Window::constant(0, 20, 3.0));
        assert!(cauchy_norm(&catalog::chaikin(), &st).unwrap() < 1e-15);
    }

    #[test]
    fn decay_rates() {
        let s = catalog::chaikin();
        let r = decay_report(&s, &RefinementState::delta(0, 6), 16, None).unwrap();
        assert!((0.49..=0.51).contains(&r.rho_emp), "{}", r.rho_emp);
        assert!((0.49..=0.51).contains(&r.rho_delta), "{}", r.rho_delta);
        assert!(r.contractive);
        assert!(r.min_margin.is_none());

        let s = catalog::perturbed_chaikin();
        let r = decay_report(&s, &RefinementState::delta(1, 6), 16, None).unwrap();
        assert!(r.rho_emp >= 1.0, "{}", r.rho_emp);
        assert!(!r.contractive);
        let first = r.rows[0].cauchy_norm;
        assert!(r.rows.iter().all(|row| row.cauchy_norm >= first * 0.5));

        assert!(decay_report(&s, &RefinementState::delta(1, 6), 3, None).is_err());
    }

    #[test]
    fn empty_output_for_short_windows() {
        let s = catalog::chaikin();
        let st = RefinementState::new(0, Window::new(0, vec![1.0]));
        assert!(matches!(refine_once(&st, &s), Err(Error::EmptyOutput { .. })));
    }

    #[test]
    fn limit_of_constants() {
        let s = catalog::chaikin();
        let l = limit_sample(&s, &RefinementState::new(0, Window::constant(-8, 17, 2.0)), 6, None).unwrap();
        assert!(l.points.iter().all(|p| (p.1 - 2.0).abs() < 1e-14));
        assert_eq!(l.bound, None);
    }
}
