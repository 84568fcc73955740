//! Adaptive Simpson quadrature with an absolute tolerance.

use thiserror::Error;

#[derive(Debug, Clone, Copy, Error)]
#[error("quadrature did not reach absolute tolerance {abs_tol} within depth {max_depth}")]
pub struct QuadratureError {
    pub abs_tol: f64,
    pub max_depth: u32,
}

/// Integrate `f` over `[a, b]` to absolute error `abs_tol`, splitting intervals
/// until the Richardson estimate is within budget or `max_depth` is exhausted.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    abs_tol: f64,
    max_depth: u32,
) -> Result<f64, QuadratureError> {
    let m = 0.5 * (a + b);
    let fa = f(a);
    let fm = f(m);
    let fb = f(b);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    refine(f, a, b, fa, fm, fb, whole, abs_tol, max_depth)
        .ok_or(QuadratureError { abs_tol, max_depth })
}

#[allow(clippy::too_many_arguments)]
fn refine<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> Option<f64> {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if delta.abs() <= 15.0 * tol {
        return Some(left + right + delta / 15.0);
    }
    if depth == 0 {
        return None;
    }
    let l = refine(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)?;
    let r = refine(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)?;
    Some(l + r)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integrates_polynomials_exactly() {
        let f = |x: f64| 3.0 * x * x;
        let v = adaptive_simpson(&f, 0.0, 1.0, 1e-12, 40).unwrap();
        assert!((v - 1.0).abs() < 1e-13);
    }

    #[test]
    fn integrates_rational_factor() {
        // int_0^1 1/(1 - 0.5 x) dx = 2 ln 2.
        let f = |x: f64| 1.0 / (1.0 - 0.5 * x);
        let v = adaptive_simpson(&f, 0.0, 1.0, 1e-10, 40).unwrap();
        assert!((v - 2.0 * std::f64::consts::LN_2).abs() < 1e-9);
    }
}
