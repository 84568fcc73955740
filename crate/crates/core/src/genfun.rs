//! Evaluation of the offspring generating function and its survival-coordinate
//! form, residual and ratio diagnostics for candidate fixed points, and a
//! numerical check of the Joffe mean-defect decomposition.
//!
//! Everything here works in survival coordinates `u = 1 - s`: the operator
//! `T(u) = 1 - F(1 - u)` has the same fixed points as the generating function
//! and is where the geometric-decay structure lives. Probability coordinates
//! appear only at I/O boundaries.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::law::{MomentSummary, OffspringLaw};
use crate::quad;

pub use crate::quad::QuadratureError;

/// Absolute tolerance for the mean-defect integrals.
pub const QUAD_TOL: f64 = 1e-10;
pub const QUAD_MAX_DEPTH: u32 = 40;

#[derive(Debug, Clone, Error)]
#[error("invalid survival vector: {0}")]
pub struct InvalidVector(String);

/// A point of the infinite cube in survival coordinates: an explicit head
/// `u^(1)..u^(N)` plus a geometric tail closure `u^(j) = u^(N) * ratio^(j-N)`
/// for `j > N`.
///
/// The closure ratio lives in (0, 1]; ratio 1 is reserved for constant vectors.
/// Fixed-point candidates use the decay rate as the ratio, which the coordinate
/// ratio asymptotics make the exact closure in the limit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UVector {
    head: Vec<f64>,
    tail_ratio: f64,
}

impl UVector {
    pub fn new(head: Vec<f64>, tail_ratio: f64) -> Result<Self, InvalidVector> {
        if head.is_empty() {
            return Err(InvalidVector("head must be non-empty".into()));
        }
        if !(tail_ratio > 0.0 && tail_ratio <= 1.0) {
            return Err(InvalidVector(format!(
                "tail ratio {tail_ratio} outside (0, 1]"
            )));
        }
        for (i, &u) in head.iter().enumerate() {
            if !(0.0..=1.0).contains(&u) || !u.is_finite() {
                return Err(InvalidVector(format!(
                    "coordinate {} = {u} outside [0, 1]",
                    i + 1
                )));
            }
        }
        Ok(UVector { head, tail_ratio })
    }

    /// All coordinates equal to `value`; closure ratio 1.
    pub fn constant(value: f64, horizon: usize) -> Self {
        UVector::new(vec![value; horizon.max(1)], 1.0).expect("constant vector is valid")
    }

    /// `u^(j) = amplitude * ratio^j`, sampled out to `horizon`.
    pub fn geometric(amplitude: f64, ratio: f64, horizon: usize) -> Result<Self, InvalidVector> {
        let head = (1..=horizon.max(1))
            .map(|j| amplitude * ratio.powi(j as i32))
            .collect();
        UVector::new(head, ratio)
    }

    /// Coordinate `i` (1-based); indices beyond the head come from the closure.
    pub fn coord(&self, i: usize) -> f64 {
        debug_assert!(i >= 1);
        let n = self.head.len();
        if i <= n {
            self.head[i - 1]
        } else {
            self.head[n - 1] * self.tail_ratio.powi((i - n) as i32)
        }
    }

    /// Consecutive coordinates `start..start+len` (1-based start).
    pub fn window(&self, start: usize, len: usize) -> Vec<f64> {
        (start..start + len).map(|i| self.coord(i)).collect()
    }

    pub fn horizon(&self) -> usize {
        self.head.len()
    }

    pub fn head(&self) -> &[f64] {
        &self.head
    }

    pub fn tail_ratio(&self) -> f64 {
        self.tail_ratio
    }

    /// Strictly decreasing on the head (the shape of decay-class vectors).
    pub fn is_strictly_decreasing(&self) -> bool {
        self.head.windows(2).all(|w| w[0] > w[1])
    }

    /// Largest coordinatewise distance to another vector over `1..=len`.
    pub fn sup_distance(&self, other: &UVector, len: usize) -> f64 {
        (1..=len)
            .map(|i| (self.coord(i) - other.coord(i)).abs())
            .fold(0.0, f64::max)
    }
}

/// Offspring generating function of a single particle, evaluated on a window of
/// probability coordinates (the window covers displacements `1..=K`).
pub fn pgf(law: &OffspringLaw, s: &[f64]) -> f64 {
    let kk = law.max_displacement();
    debug_assert!(s.len() >= kk, "window shorter than max displacement");
    law.entries()
        .iter()
        .map(|e| {
            e.prob
                * e.counts
                    .iter()
                    .zip(s)
                    .map(|(&c, &sv)| sv.powi(c as i32))
                    .product::<f64>()
        })
        .sum()
}

/// Conditional generating function for outcomes whose furthest child is at
/// displacement `k`.
fn conditional_pgf(law: &OffspringLaw, summary: &MomentSummary, k: usize, s: &[f64]) -> f64 {
    let hk = summary.h[k];
    law.entries()
        .iter()
        .filter(|e| e.max_index() == k)
        .map(|e| {
            (e.prob / hk)
                * e.counts
                    .iter()
                    .zip(s)
                    .map(|(&c, &sv)| sv.powi(c as i32))
                    .product::<f64>()
        })
        .sum()
}

/// Survival image of one coordinate: `1 - F(1 - w)` for a window `w` of
/// survival coordinates at displacements `1..=K`.
///
/// Evaluated as `sum_e p_e * (1 - prod_l (1 - w_l)^{j_l})` with the inner
/// factor through `ln_1p`/`exp_m1`, which keeps full relative accuracy when
/// the coordinates are tiny; the naive `1 - F` form loses everything to
/// cancellation below `1e-8`. The no-offspring outcome contributes zero, so
/// the rewrite is exact up to the unit probability mass.
pub fn t_apply_window(law: &OffspringLaw, w: &[f64]) -> f64 {
    law.entries()
        .iter()
        .map(|e| {
            if e.counts.is_empty() {
                return 0.0;
            }
            let log_prod: f64 = e
                .counts
                .iter()
                .zip(w)
                .map(|(&c, &u)| {
                    if c == 0 {
                        0.0
                    } else if u >= 1.0 {
                        f64::NEG_INFINITY
                    } else {
                        f64::from(c) * (-u).ln_1p()
                    }
                })
                .sum();
            e.prob * (-log_prod.exp_m1())
        })
        .sum()
}

/// Coordinate `i` of the survival operator applied to `u`. Reads coordinates
/// `i..i+K-1`, with the tail closure supplying anything beyond the head.
pub fn t_apply(law: &OffspringLaw, u: &UVector, i: usize) -> f64 {
    let w = u.window(i, law.max_displacement());
    t_apply_window(law, &w)
}

/// Fixed-point residuals of a vector under the survival operator.
///
/// The per-coordinate window stops `K` short of the head so that no reported
/// residual reads closure values. `tail_estimate` accounts for the rest: the
/// squared residuals of the `K` skipped head coordinates plus `extra` closure
/// coordinates, extended by the observed geometric decay of the last two.
#[derive(Debug, Clone)]
pub struct ResidualReport {
    /// `res_i = u^(i) - T^(i)(u)` for `i = 1..=horizon-K`.
    pub per_coordinate: Vec<f64>,
    pub l2_window: f64,
    pub sup_window: f64,
    pub tail_estimate: f64,
}

impl ResidualReport {
    pub fn window_len(&self) -> usize {
        self.per_coordinate.len()
    }
}

pub fn residuals(law: &OffspringLaw, u: &UVector, extra: usize) -> ResidualReport {
    let kk = law.max_displacement();
    let n = u.horizon();
    assert!(
        n > kk,
        "horizon {n} leaves no closure-free window (max displacement {kk})"
    );
    let window_end = n - kk;

    let res_at = |i: usize| u.coord(i) - t_apply(law, u, i);

    let per_coordinate: Vec<f64> = (1..=window_end).map(res_at).collect();
    let l2_window = per_coordinate.iter().map(|r| r * r).sum::<f64>().sqrt();
    let sup_window = per_coordinate.iter().fold(0.0, |m, r| f64::max(m, r.abs()));

    let mut tail_sq = 0.0;
    let mut last_two = [0.0f64; 2];
    for i in window_end + 1..=n + extra {
        let r = res_at(i);
        tail_sq += r * r;
        last_two = [last_two[1], r.abs()];
    }
    // Geometric extension from the observed decay of the final pair; the ratio
    // is clamped below 1 so a non-decaying tail yields a large, conservative
    // estimate instead of a bogus small one.
    if last_two[1] > 0.0 && last_two[0] > 0.0 {
        let ratio = (last_two[1] / last_two[0]).min(0.999);
        let r2 = ratio * ratio;
        tail_sq += last_two[1] * last_two[1] * r2 / (1.0 - r2);
    }

    ResidualReport {
        per_coordinate,
        l2_window,
        sup_window,
        tail_estimate: tail_sq.sqrt(),
    }
}

/// Mean-defect integral `E_{k,j}` of the Joffe decomposition, evaluated at the
/// survival window `u` (displacements `1..=k`):
///
/// `E_{k,j}(u) = sum over outcomes with furthest child k of
///     (prob / h_k) * j_j * [1 - int_0^1 prod_l (1 - u_l x)^{j_l} / (1 - u_j x) dx]`.
///
/// The integrand is a polynomial (the `j`-th factor has exponent `j_j - 1 >= 0`
/// whenever the term is nonzero), so the quadrature is over a smooth function.
pub fn joffe_defect(
    law: &OffspringLaw,
    summary: &MomentSummary,
    k: usize,
    j: usize,
    u: &[f64],
) -> Result<f64, QuadratureError> {
    assert!(j >= 1 && j <= k);
    assert!(u.len() >= k);
    let hk = summary.h[k];
    assert!(
        hk > 0.0,
        "no outcome has its furthest child at displacement {k}"
    );

    let mut total = 0.0;
    for e in law.entries().iter().filter(|e| e.max_index() == k) {
        let jj = e.counts[j - 1];
        if jj == 0 {
            continue;
        }
        let integrand = |x: f64| -> f64 {
            let mut v = 1.0;
            for (l, &c) in e.counts.iter().enumerate() {
                let exponent = if l + 1 == j { c - 1 } else { c };
                if exponent > 0 {
                    v *= (1.0 - u[l] * x).powi(exponent as i32);
                }
            }
            v
        };
        let integral = quad::adaptive_simpson(&integrand, 0.0, 1.0, QUAD_TOL, QUAD_MAX_DEPTH)?;
        total += (e.prob / hk) * f64::from(jj) * (1.0 - integral);
    }
    Ok(total)
}

/// Outcome of verifying the Joffe decomposition identity at one window.
#[derive(Debug, Clone)]
pub struct JoffeCheck {
    pub pass: bool,
    pub max_deviation: f64,
}

/// Verify `1 - f_k(1 - u) = sum_j (a_{k,j} - E_{k,j}(u)) u_j` for every `k`
/// with positive furthest-child probability, to within `tol`.
pub fn joffe_identity_check(
    law: &OffspringLaw,
    summary: &MomentSummary,
    u: &[f64],
    tol: f64,
) -> Result<JoffeCheck, QuadratureError> {
    let kk = law.max_displacement();
    assert!(u.len() >= kk);
    let mut max_deviation = 0.0f64;
    for k in 1..=kk {
        if summary.h[k] <= 0.0 {
            continue;
        }
        let s: Vec<f64> = u[..k].iter().map(|&x| 1.0 - x).collect();
        let lhs = 1.0 - conditional_pgf(law, summary, k, &s);
        let mut rhs = 0.0;
        for j in 1..=k {
            let defect = joffe_defect(law, summary, k, j, &u[..k])?;
            rhs += (summary.a_kj(k, j) - defect) * u[j - 1];
        }
        max_deviation = max_deviation.max((lhs - rhs).abs());
    }
    Ok(JoffeCheck {
        pass: max_deviation <= tol,
        max_deviation,
    })
}

/// Coordinate-ratio diagnostics along a vector.
///
/// `alpha[i - window_start] = u^(i+1) / u^(i)` and
/// `u_diag[i - window_start] = sum_k M_k * prod_{l=1}^{k-1} alpha_{i+l-1}`.
/// On an exact fixed point the second sequence tends to 1 and the first to the
/// decay rate.
#[derive(Debug, Clone)]
pub struct RatioDiagnostics {
    pub window_start: usize,
    pub window_end: usize,
    pub alpha: Vec<f64>,
    pub u_diag: Vec<f64>,
}

impl RatioDiagnostics {
    pub fn alpha_at(&self, i: usize) -> f64 {
        self.alpha[i - self.window_start]
    }
    pub fn u_diag_at(&self, i: usize) -> f64 {
        self.u_diag[i - self.window_start]
    }
}

pub fn ratio_diag(
    summary: &MomentSummary,
    u: &UVector,
    window_start: usize,
    window_end: usize,
) -> RatioDiagnostics {
    assert!(window_start >= 1 && window_end >= window_start);
    let kk = summary.mk.len();
    // alpha needed out to window_end + K - 2 to assemble the last u_diag entry
    let alpha_far = window_end + kk.saturating_sub(2);
    let alpha_all: Vec<f64> = (window_start..=alpha_far)
        .map(|i| {
            let lo = u.coord(i);
            assert!(
                lo > 0.0,
                "ratio diagnostics need positive coordinates (zero at {i})"
            );
            u.coord(i + 1) / lo
        })
        .collect();

    let u_diag: Vec<f64> = (window_start..=window_end)
        .map(|i| {
            let mut prod = 1.0;
            let mut total = summary.mk[0];
            for k in 2..=kk {
                prod *= alpha_all[i + k - 2 - window_start];
                total += summary.mk[k - 1] * prod;
            }
            total
        })
        .collect();

    RatioDiagnostics {
        window_start,
        window_end,
        alpha: alpha_all[..window_end - window_start + 1].to_vec(),
        u_diag,
    }
}

/// Per-coordinate diagnostics as CSV: `i, u_i, s_i, residual_i, alpha_i, U_i`.
/// Rows cover the closure-free residual window clipped to `max_rows`.
pub fn diagnostics_csv(
    law: &OffspringLaw,
    summary: &MomentSummary,
    u: &UVector,
    max_rows: usize,
) -> String {
    let report = residuals(law, u, 8);
    let end = report.window_len().min(max_rows).max(1);
    let ratios = ratio_diag(summary, u, 1, end);
    let mut out = String::from("i,u_i,s_i,residual_i,alpha_i,U_i\n");
    for i in 1..=end {
        let ui = u.coord(i);
        out.push_str(&format!(
            "{},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}\n",
            i,
            ui,
            1.0 - ui,
            report.per_coordinate[i - 1],
            ratios.alpha_at(i),
            ratios.u_diag_at(i),
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::law::moments;
    use crate::samples;

    #[test]
    fn pgf_point_values() {
        let law = samples::supercritical_example();
        assert!((pgf(&law, &[1.0, 1.0]) - 1.0).abs() < 1e-15);
        assert!((pgf(&law, &[0.0, 0.0]) - 0.3).abs() < 1e-15);
        // All coordinates at the extinction probability reproduce it.
        assert!((pgf(&law, &[0.6, 0.6]) - 0.6).abs() < 1e-15);
    }

    #[test]
    fn survival_operator_fixed_values() {
        let law = samples::supercritical_example();
        let grand = UVector::constant(0.4, 8);
        for i in [1, 3, 20] {
            assert!((t_apply(&law, &grand, i) - 0.4).abs() < 1e-15);
        }
        let zero = UVector::constant(0.0, 8);
        assert_eq!(t_apply(&law, &zero, 2), 0.0);
        // Hand-solved pair from the prepend example.
        let v = UVector::new(vec![0.11875, 0.1, 0.1, 0.1], 1.0).unwrap();
        assert!((t_apply(&law, &v, 1) - 0.11875).abs() < 1e-15);
    }

    #[test]
    fn residuals_vanish_on_constant_fixed_point() {
        let law = samples::supercritical_example();
        let u = UVector::constant(0.4, 40);
        let rep = residuals(&law, &u, 8);
        assert!(rep.sup_window < 1e-15);
        assert!(rep.l2_window < 1e-14);
    }

    #[test]
    fn residual_of_geometric_seed_decays_at_squared_ratio() {
        // For the reference law, T^(j)(u) - u^(j) = -0.5 (u^(j+1))^2 when the
        // vector is exactly geometric with the decay ratio, so the typed
        // residual u - T is +0.5 (u^(j+1))^2 and decays at ratio 0.64.
        let law = samples::supercritical_example();
        let u = UVector::geometric(0.125, 0.8, 50).unwrap(); // u^(j) = 0.1 * 0.8^(j-1)
        assert!((u.coord(1) - 0.1).abs() < 1e-15);
        let rep = residuals(&law, &u, 8);
        for (idx, &r) in rep.per_coordinate.iter().enumerate().take(30) {
            let j = idx + 1;
            let expected = 0.5 * u.coord(j + 1) * u.coord(j + 1);
            assert!(
                (r - expected).abs() < 1e-15,
                "coordinate {j}: {r} vs {expected}"
            );
        }
        for w in rep.per_coordinate.windows(2).take(20) {
            assert!((w[1] / w[0] - 0.64).abs() < 1e-9);
        }
    }

    #[test]
    fn l2_window_recomputable_from_coordinates() {
        let law = samples::supercritical_example();
        let u = UVector::geometric(0.2, 0.8, 30).unwrap();
        let rep = residuals(&law, &u, 4);
        let l2: f64 = rep.per_coordinate.iter().map(|r| r * r).sum::<f64>().sqrt();
        assert!((l2 - rep.l2_window).abs() < 1e-15);
    }

    #[test]
    fn defect_integral_closed_forms() {
        let law = samples::supercritical_example();
        let s = moments(&law);
        // Single same-type child: integrand is identically 1.
        let v = joffe_defect(&law, &s, 1, 1, &[0.3]).unwrap();
        assert!(v.abs() < 1e-12);
        // Two displacement-2 children: E = u_2 exactly.
        let v = joffe_defect(&law, &s, 2, 2, &[0.7, 0.1]).unwrap();
        assert!((v - 0.1).abs() < 1e-10);
        // No displacement-1 child on that outcome: count factor kills the term.
        let v = joffe_defect(&law, &s, 2, 1, &[0.5, 0.5]).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn joffe_identity_reference_points() {
        let law = samples::supercritical_example();
        let s = moments(&law);
        let check = joffe_identity_check(&law, &s, &[0.2, 0.1], 1e-8).unwrap();
        assert!(check.pass);
        assert!(check.max_deviation <= 1e-10);

        let check = joffe_identity_check(&law, &s, &[0.0, 0.0], 1e-12).unwrap();
        assert_eq!(check.max_deviation, 0.0);

        // One coordinate at 1 - q, the other consistent with it.
        let check = joffe_identity_check(&law, &s, &[0.4, 0.4], 1e-8).unwrap();
        assert!(check.pass);
    }

    #[test]
    fn ratio_diagnostics_reference_shapes() {
        let s = moments(&samples::supercritical_example());
        let geo = UVector::geometric(0.3, 0.8, 64).unwrap();
        let d = ratio_diag(&s, &geo, 1, 32);
        for i in 1..=32 {
            assert!((d.alpha_at(i) - 0.8).abs() < 1e-13);
            assert!((d.u_diag_at(i) - 1.0).abs() < 1e-12);
        }
        let flat = UVector::constant(0.25, 64);
        let d = ratio_diag(&s, &flat, 1, 16);
        for i in 1..=16 {
            assert!((d.alpha_at(i) - 1.0).abs() < 1e-15);
            assert!((d.u_diag_at(i) - s.m).abs() < 1e-14);
        }
    }

    #[test]
    fn csv_has_header_and_expected_rows() {
        let law = samples::supercritical_example();
        let s = moments(&law);
        let u = UVector::geometric(0.3, 0.8, 24).unwrap();
        let csv = diagnostics_csv(&law, &s, &u, 10);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "i,u_i,s_i,residual_i,alpha_i,U_i");
        assert_eq!(lines.len(), 11);
        assert!(lines[1].starts_with("1,"));
    }

    #[test]
    fn closure_supplies_coordinates_beyond_head() {
        let u = UVector::new(vec![0.4, 0.2, 0.1], 0.5).unwrap();
        assert_eq!(u.coord(3), 0.1);
        assert!((u.coord(4) - 0.05).abs() < 1e-15);
        assert!((u.coord(6) - 0.0125).abs() < 1e-15);
    }
}
