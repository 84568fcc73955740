//! Bracketed scalar root finding for the three equations the rest of the crate
//! needs: the extinction probability `q` (fixed point of the projected
//! total-count generating function), the decay rate `gamma` (unit level set of
//! the displacement-mean polynomial), and the prepend solve that extends a
//! survival vector backwards by one coordinate.
//!
//! All three are monotone scalar problems on [0, 1]; plain bisection to bracket
//! width 1e-14 beats anything derivative-based on robustness and is plenty fast.

use thiserror::Error;

use crate::genfun;
use crate::law::{MomentSummary, OffspringLaw};

/// Bisection runs to this bracket width (or the iteration cap, whichever first).
pub const BRACKET_WIDTH: f64 = 1e-14;
pub const MAX_ITERATIONS: u32 = 200;

#[derive(Debug, Clone, Copy)]
pub struct RootResult {
    pub value: f64,
    pub iterations: u32,
    pub bracket_width_final: f64,
    /// Absolute value of the defining equation at `value`.
    pub residual: f64,
}

/// The decay-rate equation has no root in (0, 1) unless the total mean exceeds 1.
#[derive(Debug, Clone, Copy, Error)]
#[error("no decay rate in (0,1): total mean offspring M = {m} is not above 1")]
pub struct NoRootInRegime {
    pub m: f64,
}

#[derive(Debug, Clone, Copy, Error)]
#[error("bracket endpoints do not straddle a root (f(0) = {f_lo}, f(1) = {f_hi})")]
pub struct BracketError {
    pub f_lo: f64,
    pub f_hi: f64,
}

/// Bisect `f` on `[lo, hi]`. `positive_at_lo` states the sign convention:
/// the bracket keeps `f > 0` on the `lo` side. Exact zeros at probes return
/// immediately.
fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, positive_at_lo: bool) -> RootResult {
    let mut iterations = 0;
    while hi - lo > BRACKET_WIDTH && iterations < MAX_ITERATIONS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break; // f64 resolution exhausted
        }
        let fm = f(mid);
        iterations += 1;
        if fm == 0.0 {
            return RootResult {
                value: mid,
                iterations,
                bracket_width_final: hi - lo,
                residual: 0.0,
            };
        }
        if (fm > 0.0) == positive_at_lo {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let value = 0.5 * (lo + hi);
    RootResult {
        value,
        iterations,
        bracket_width_final: hi - lo,
        residual: f(value).abs(),
    }
}

fn horner(coeffs: &[f64], s: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &c| acc * s + c)
}

/// Global extinction probability: the root of `F0(s) = s` in (0, 1) when the
/// total mean exceeds 1, and exactly 1 otherwise.
pub fn solve_q(summary: &MomentSummary) -> RootResult {
    if !summary.is_supercritical() {
        return RootResult {
            value: 1.0,
            iterations: 0,
            bracket_width_final: 0.0,
            residual: 0.0,
        };
    }
    // F0(s) - s is positive at 0 (no-offspring mass), negative just left of 1
    // (slope above 1 there), and zero at 1 itself; treating the upper endpoint
    // as the negative side steers bisection to the interior root.
    let f = |s: f64| horner(&summary.f0_coeffs, s) - s;
    bisect(f, 0.0, 1.0, true)
}

/// Decay rate: the root of `sum_i M_i s^(i-1) = 1` in (0, 1). Exists exactly
/// when the law is supercritical (the polynomial is `M_1 < 1` at zero and
/// `M > 1` at one).
pub fn solve_gamma(summary: &MomentSummary) -> Result<RootResult, NoRootInRegime> {
    if !summary.is_supercritical() || summary.mean_at(1) >= 1.0 {
        return Err(NoRootInRegime { m: summary.m });
    }
    let g = |s: f64| horner(&summary.mk, s) - 1.0;
    Ok(bisect(g, 0.0, 1.0, false))
}

/// Extend a survival vector backwards: find the unique `u` in [0, 1) with
/// `u = 1 - F(1 - u, 1 - tail...)`, where `tail` supplies the coordinates at
/// displacements `2..=K` below the new one. Uniqueness holds because the map's
/// slope in `u` is at most the same-type mean, which is below 1.
///
/// `tail` must provide at least `K - 1` coordinates in [0, 1]; extra entries are
/// ignored. Coordinates touching 0 or 1 are allowed; the solve degenerates to
/// the exact boundary limits.
pub fn solve_prepend(law: &OffspringLaw, tail: &[f64]) -> Result<RootResult, BracketError> {
    let kk = law.max_displacement();
    assert!(
        tail.len() >= kk - 1,
        "prepend tail needs {} coordinates, got {}",
        kk - 1,
        tail.len()
    );
    let mut window = vec![0.0; kk];
    window[1..kk].copy_from_slice(&tail[..kk - 1]);
    let shifted = |u: f64| {
        let mut w = window.clone();
        w[0] = u;
        genfun::t_apply_window(law, &w) - u
    };
    let f_lo = shifted(0.0);
    let f_hi = shifted(1.0);
    if f_lo == 0.0 {
        return Ok(RootResult {
            value: 0.0,
            iterations: 0,
            bracket_width_final: 0.0,
            residual: 0.0,
        });
    }
    if f_lo < 0.0 || f_hi > 0.0 {
        return Err(BracketError { f_lo, f_hi });
    }
    let coarse = bisect(shifted, 0.0, 1.0, true);

    // Bisection resolves the root to absolute 1e-14, which is useless when the
    // root itself sits at 1e-20 (deep-tail prepends). The map u -> T(u, tail)
    // contracts at rate M_1 < 1, so a fixed-point polish from the bisection
    // value recovers full relative accuracy at every scale.
    let image = |u: f64| {
        let mut w = window.clone();
        w[0] = u;
        genfun::t_apply_window(law, &w)
    };
    let mut u = coarse.value;
    let mut iterations = coarse.iterations;
    for _ in 0..20_000 {
        let next = image(u);
        iterations += 1;
        let done = (next - u).abs() <= 1e-15 * next.abs();
        u = next;
        if done {
            break;
        }
    }
    Ok(RootResult {
        value: u,
        iterations,
        bracket_width_final: coarse.bracket_width_final,
        residual: (image(u) - u).abs(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::law::moments;
    use crate::samples;

    #[test]
    fn q_of_reference_law_is_three_fifths() {
        // 0.5 q^2 - 0.8 q + 0.3 = 0 has roots 0.6 and 1.
        let r = solve_q(&moments(&samples::supercritical_example()));
        assert!((r.value - 0.6).abs() < 1e-12);
        assert!(r.residual <= 1e-12);
    }

    #[test]
    fn q_is_one_without_supercriticality() {
        let r = solve_q(&moments(&samples::subcritical_example()));
        assert_eq!(r.value, 1.0);
        assert_eq!(r.residual, 0.0);

        let r = solve_q(&moments(&samples::critical_example()));
        assert_eq!(r.value, 1.0);
    }

    #[test]
    fn gamma_of_reference_law() {
        // 0.2 + 1.0 * gamma = 1.
        let r = solve_gamma(&moments(&samples::supercritical_example())).unwrap();
        assert!((r.value - 0.8).abs() < 1e-12);
        assert!(r.residual <= 1e-12);
    }

    #[test]
    fn gamma_refused_off_regime() {
        assert!(solve_gamma(&moments(&samples::subcritical_example())).is_err());
        assert!(solve_gamma(&moments(&samples::critical_example())).is_err());
    }

    #[test]
    fn gamma_with_displacement_three_support() {
        // 0.2 + 1.28 gamma^2 = 1 so gamma = sqrt(0.625).
        let r = solve_gamma(&moments(&samples::third_displacement_example())).unwrap();
        assert!((r.value - 0.625f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn prepend_fixed_tail_cases() {
        let law = samples::supercritical_example();
        // Constant survival 1 - q is a fixed point, so prepending reproduces it.
        let r = solve_prepend(&law, &[0.4]).unwrap();
        assert!((r.value - 0.4).abs() < 1e-13);
        // The zero vector is a fixed point too.
        let r = solve_prepend(&law, &[0.0]).unwrap();
        assert_eq!(r.value, 0.0);
        // Linear solve by hand: u = 0.095 + 0.2 u.
        let r = solve_prepend(&law, &[0.1]).unwrap();
        assert!((r.value - 0.11875).abs() < 1e-13);
        assert!(r.residual <= 1e-13);
    }

    #[test]
    fn prepend_agrees_with_damped_iteration() {
        // The map u -> T(u, tail) has slope at most M_1 < 1, so plain iteration
        // from 0 converges; it must land on the bisection answer.
        let law = samples::supercritical_example();
        for tail in [[0.05], [0.2], [0.39]] {
            let r = solve_prepend(&law, &tail).unwrap();
            let mut u = 0.0;
            for _ in 0..2000 {
                let next = crate::genfun::t_apply_window(&law, &[u, tail[0]]);
                if (next - u).abs() < 1e-16 {
                    break;
                }
                u = next;
            }
            assert!((u - r.value).abs() < 1e-11);
        }
    }

    #[test]
    fn results_invariant_under_entry_permutation() {
        // Canonicalization sorts entries, so any input order yields identical
        // summaries; spot-check through the solvers anyway.
        let text_a = r#"{"name":"p","offspring":[
            {"counts":[],"prob":0.3},{"counts":[1],"prob":0.2},{"counts":[0,2],"prob":0.5}]}"#;
        let text_b = r#"{"name":"p","offspring":[
            {"counts":[0,2],"prob":0.5},{"counts":[1],"prob":0.2},{"counts":[],"prob":0.3}]}"#;
        let a = moments(&crate::law::load_law(text_a).unwrap());
        let b = moments(&crate::law::load_law(text_b).unwrap());
        assert!((solve_q(&a).value - solve_q(&b).value).abs() < 1e-10);
        assert!((solve_gamma(&a).unwrap().value - solve_gamma(&b).unwrap().value).abs() < 1e-10);
    }
}
