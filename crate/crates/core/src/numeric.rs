//! Floating-point building blocks shared across the crate: branch-stable
//! modular reduction, order-stable summation, and adaptive quadrature.

/// Floored remainder of `x` into `[0, modulus)`.
///
/// The quotient is taken with `floor`, then the remainder is recovered with a
/// fused multiply-add, so the absolute error stays near one ulp of `modulus`
/// even when `x` spans millions of periods.
pub(crate) fn floored_rem(x: f64, modulus: f64) -> f64 {
    debug_assert!(modulus > 0.0 && modulus.is_finite());
    let n = (x / modulus).floor();
    let mut r = f64::mul_add(-n, modulus, x);
    if r < 0.0 {
        r += modulus;
    }
    if r >= modulus {
        r -= modulus;
    }
    if r < 0.0 {
        r = 0.0;
    }
    // normalize -0.0
    r + 0.0
}

/// `(x0 + v*t) mod modulus` with the product's low half recovered by an fma
/// and folded back in after reduction. Keeps the drift at the ulp level for
/// |v*t| up to ~1e9 rad, where a plain `(x0 + v * t) % modulus` would already
/// have lost the digits the reduction needs.
pub(crate) fn advance_mod(x0: f64, v: f64, t: f64, modulus: f64) -> f64 {
    let hi = v * t;
    let lo = f64::mul_add(v, t, -hi);
    let r = floored_rem(hi, modulus);
    floored_rem(x0 + r + lo, modulus)
}

/// Sum with a fixed pairwise tree. The tree shape depends only on the slice
/// length, so the result is bit-identical no matter how the values were
/// produced (sequentially or by any number of worker threads).
pub(crate) fn pairwise_sum(values: &[f64]) -> f64 {
    if values.len() <= 8 {
        let mut acc = 0.0;
        for v in values {
            acc += v;
        }
        return acc;
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

pub(crate) fn pairwise_mean(values: &[f64]) -> f64 {
    debug_assert!(!values.is_empty());
    pairwise_sum(values) / values.len() as f64
}

/// `d^alpha`, short-circuiting the free-space exponent.
#[inline]
pub(crate) fn powa(d: f64, alpha: f64) -> f64 {
    if alpha == 2.0 {
        d * d
    } else {
        d.powf(alpha)
    }
}

fn simpson(f: &impl Fn(f64) -> f64, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
    let m = 0.5 * (a + b);
    let fm = f(m);
    ((b - a) / 6.0 * (fa + 4.0 * fm + fb), m, fm)
}

#[allow(clippy::too_many_arguments)]
fn simpson_rec(
    f: &impl Fn(f64) -> f64,
    a: f64,
    fa: f64,
    b: f64,
    fb: f64,
    m: f64,
    fm: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let (left, lm, flm) = simpson(f, a, fa, m, fm);
    let (right, rm, frm) = simpson(f, m, fm, b, fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson_rec(f, a, fa, m, fm, lm, flm, left, 0.5 * tol, depth - 1)
        + simpson_rec(f, m, fm, b, fb, rm, frm, right, 0.5 * tol, depth - 1)
}

/// Adaptive Simpson quadrature of `f` over `[a, b]` to absolute tolerance
/// `tol`, with a recursion-depth cap so staircase integrands terminate.
pub(crate) fn adaptive_simpson(
    f: impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    tol: f64,
    max_depth: u32,
) -> f64 {
    if a == b {
        return 0.0;
    }
    let fa = f(a);
    let fb = f(b);
    let (whole, m, fm) = simpson(&f, a, fa, b, fb);
    simpson_rec(&f, a, fa, b, fb, m, fm, whole, tol, max_depth)
}
