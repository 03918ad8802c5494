//! Small numerical helpers shared by the solver, bounds and impact modules.

/// `log(sum_j w_j exp(x_j))` with the exponents shifted by their maximum.
///
/// Weights must be positive. Any `+inf` exponent makes the result `+inf`.
pub fn weighted_log_sum_exp(weights: &[f64], xs: &[f64]) -> f64 {
    debug_assert_eq!(weights.len(), xs.len());
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max.is_infinite() {
        return max;
    }
    let sum: f64 = weights
        .iter()
        .zip(xs)
        .map(|(w, x)| w * (x - max).exp())
        .sum();
    max + sum.ln()
}

/// Linear interpolation that treats `+inf` as absorbing and is exact at `t = 0` and `t = 1`.
#[inline]
pub fn lerp(a: f64, b: f64, t: f64) -> f64 {
    if t == 0.0 {
        a
    } else if t == 1.0 {
        b
    } else if a.is_infinite() || b.is_infinite() {
        f64::INFINITY
    } else {
        (1.0 - t) * a + t * b
    }
}

/// Adaptive Simpson quadrature on `[a, b]` to absolute tolerance `tol`.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_step(f, a, b, fa, fm, fb, whole, tol, 50)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

/// Pairwise summation in a fixed order, so aggregates do not depend on scheduling.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    match xs.len() {
        0 => 0.0,
        1 => xs[0],
        2 => xs[0] + xs[1],
        len => {
            let (l, r) = xs.split_at(len / 2);
            pairwise_sum(l) + pairwise_sum(r)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lse_matches_naive_on_small_inputs() {
        let w = [0.25, 0.5, 0.25];
        let x = [-1.0f64, 0.5, 2.0];
        let naive: f64 = w.iter().zip(&x).map(|(w, x)| w * x.exp()).sum::<f64>().ln();
        assert!((weighted_log_sum_exp(&w, &x) - naive).abs() < 1e-14);
    }

    #[test]
    fn lse_survives_huge_exponents() {
        let w = [0.5, 0.5];
        let x = [1.0e7, 1.0e7 - 1.0];
        let got = weighted_log_sum_exp(&w, &x);
        let expected = 1.0e7 + (0.5 + 0.5 * (-1.0f64).exp()).ln();
        assert!((got - expected).abs() < 1e-8);
        assert_eq!(weighted_log_sum_exp(&w, &[1.0, f64::INFINITY]), f64::INFINITY);
    }

    #[test]
    fn lerp_is_exact_at_endpoints_and_absorbs_infinity() {
        assert_eq!(lerp(3.0, f64::INFINITY, 0.0), 3.0);
        assert_eq!(lerp(3.0, f64::INFINITY, 0.5), f64::INFINITY);
        assert_eq!(lerp(1.0, 3.0, 0.5), 2.0);
    }

    #[test]
    fn simpson_integrates_smooth_function() {
        let got = adaptive_simpson(&|x: f64| x.sin(), 0.0, std::f64::consts::PI, 1e-12);
        assert!((got - 2.0).abs() < 1e-10);
    }
}
