//! Small numerical kernels shared by the analytic modules: Poisson tail
//! sums, bracketing root finders, one-dimensional minimisation and adaptive
//! quadrature.
//!
//! Every routine here is deterministic: grids are fixed and iteration counts
//! are bounded, so repeated runs are bit-for-bit identical.

use crate::error::{Error, Result};

/// Rounding guard band applied before clamping probabilities into [0, 1].
pub const GUARD_BAND: f64 = 1e-12;

/// Clamps `value` into [0, 1] if it lies within [`GUARD_BAND`] of the
/// interval; anything further out is reported as a model error.
pub fn clamp_probability(value: f64, context: &'static str) -> Result<f64> {
    if !value.is_finite() || !(-GUARD_BAND..=1.0 + GUARD_BAND).contains(&value) {
        return Err(Error::ProbabilityOutOfRange { value, context });
    }
    Ok(value.clamp(0.0, 1.0))
}

/// `P(N <= t)` for `N ~ Poisson(x)`.
pub fn poisson_cdf(t: u32, x: f64) -> f64 {
    if x == 0.0 {
        return 1.0;
    }
    let mut term = (-x).exp();
    let mut sum = term;
    for s in 1..=t {
        term *= x / s as f64;
        sum += term;
    }
    sum.min(1.0)
}

/// `P(N > t)` for `N ~ Poisson(x)`, accurate for small `x` where `1 - cdf`
/// would cancel.
pub fn poisson_upper_tail(t: u32, x: f64) -> f64 {
    if x == 0.0 {
        return 0.0;
    }
    if t == 0 {
        return -(-x).exp_m1();
    }
    if x >= t as f64 + 1.0 {
        return (1.0 - poisson_cdf(t, x)).max(0.0);
    }
    // Direct series over s > t; the ratio x/(s+1) is below one from the start.
    let mut term = (-x).exp();
    for s in 1..=t + 1 {
        term *= x / s as f64;
    }
    let mut sum = 0.0;
    let mut s = t + 1;
    loop {
        sum += term;
        s += 1;
        term *= x / s as f64;
        if term < sum * 1e-18 || term == 0.0 {
            break;
        }
    }
    sum.min(1.0)
}

/// Smallest `n` such that `P(N > n) < tail` for `N ~ Poisson(x)`.
pub fn poisson_truncation(x: f64, tail: f64) -> u32 {
    let mut n = 0u32;
    while poisson_upper_tail(n, x) >= tail {
        n += 1;
    }
    n
}

/// Bisection for a sign change of `f` on `[lo, hi]`.
///
/// `f(lo)` and `f(hi)` must have opposite signs (a zero at either end is
/// returned directly). Stops once the bracket is narrower than `tol`.
pub fn bisect<F: FnMut(f64) -> f64>(mut f: F, mut lo: f64, mut hi: f64, tol: f64, what: &'static str) -> Result<f64> {
    let mut f_lo = f(lo);
    let f_hi = f(hi);
    if f_lo == 0.0 {
        return Ok(lo);
    }
    if f_hi == 0.0 {
        return Ok(hi);
    }
    if f_lo.signum() == f_hi.signum() || !f_lo.is_finite() || !f_hi.is_finite() {
        return Err(Error::NotBracketed { what, lo, hi });
    }
    for _ in 0..200 {
        if hi - lo <= tol {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let f_mid = f(mid);
        if f_mid == 0.0 {
            return Ok(mid);
        }
        if f_mid.signum() == f_lo.signum() {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Golden-section search for a minimum of a unimodal `f` on `[a, b]`.
/// Returns `(argmin, min)`.
pub fn golden_section_min<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, tol: f64) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let (mut a, mut b) = (a, b);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a).abs() > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    let mid = 0.5 * (a + b);
    let f_mid = f(mid);
    // Keep whichever evaluated point is best; the bracket ends can win on
    // monotone pieces.
    [(mid, f_mid), (c, fc), (d, fd)]
        .into_iter()
        .fold((mid, f_mid), |best, cand| if cand.1 < best.1 { cand } else { best })
}

/// Minimum of `f` over `[a, b]` by a uniform grid of `points` samples
/// followed by golden-section refinement around the best sample.
pub fn grid_min<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, points: usize, tol: f64) -> (f64, f64) {
    debug_assert!(points >= 2);
    let h = (b - a) / (points - 1) as f64;
    let mut best = (a, f(a));
    let mut best_idx = 0;
    for i in 1..points {
        let x = if i == points - 1 { b } else { a + h * i as f64 };
        let v = f(x);
        if v < best.1 {
            best = (x, v);
            best_idx = i;
        }
    }
    let lo = if best_idx == 0 { a } else { best.0 - h };
    let hi = if best_idx == points - 1 { b } else { best.0 + h };
    let refined = golden_section_min(&mut f, lo.max(a), hi.min(b), tol);
    if refined.1 < best.1 {
        refined
    } else {
        best
    }
}

/// Adaptive Simpson quadrature of `f` over `[a, b]` to absolute tolerance `tol`.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_step(f, a, b, fa, fm, fb, whole, tol, 48)
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
