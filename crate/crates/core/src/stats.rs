//! Small statistics toolbox: normal quantile, Wilson score intervals,
//! mean confidence intervals, Kolmogorov-Smirnov distances.

/// Inverse standard normal CDF (Acklam's rational approximation,
/// absolute error below 1.2e-9 over (0, 1)).
pub(crate) fn normal_quantile(p: f64) -> f64 {
    assert!(p > 0.0 && p < 1.0, "quantile defined on (0, 1), got {p}");

    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.38357751867269e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    const P_LOW: f64 = 0.02425;

    if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        -normal_quantile(1.0 - p)
    }
}

/// Two-sided z value for a given confidence level.
pub(crate) fn z_for_confidence(confidence: f64) -> f64 {
    normal_quantile(0.5 + confidence / 2.0)
}

/// Wilson score interval for a binomial proportion. Behaves correctly at the
/// 0 and 1 edges, unlike the plain normal approximation.
pub(crate) fn wilson_interval(successes: u64, n: u64, confidence: f64) -> (f64, f64) {
    assert!(n > 0 && successes <= n);
    let z = z_for_confidence(confidence);
    let n = n as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

/// Normal-approximation confidence interval for a sample mean.
/// Returns `(mean, lo, hi)`.
pub(crate) fn mean_interval(values: &[f64], confidence: f64) -> (f64, f64, f64) {
    assert!(values.len() >= 2);
    let n = values.len() as f64;
    let mean = crate::numeric::pairwise_mean(values);
    let sq: Vec<f64> = values.iter().map(|v| (v - mean) * (v - mean)).collect();
    let var = crate::numeric::pairwise_sum(&sq) / (n - 1.0);
    let half = z_for_confidence(confidence) * (var / n).sqrt();
    (mean, mean - half, mean + half)
}

/// One-sample KS statistic of `samples` against the uniform distribution on
/// `[lo, hi]`. Sorts in place.
pub(crate) fn ks_statistic_uniform(samples: &mut [f64], lo: f64, hi: f64) -> f64 {
    assert!(!samples.is_empty() && hi > lo);
    samples.sort_by(f64::total_cmp);
    let n = samples.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in samples.iter().enumerate() {
        let f = ((x - lo) / (hi - lo)).clamp(0.0, 1.0);
        d = d.max((f - i as f64 / n).max((i as f64 + 1.0) / n - f));
    }
    d
}

/// Two-sample KS statistic. Sorts both inputs in place.
#[cfg(test)]
pub(crate) fn ks_statistic_two_sample(a: &mut [f64], b: &mut [f64]) -> f64 {
    assert!(!a.is_empty() && !b.is_empty());
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d = 0.0f64;
    while i < a.len() && j < b.len() {
        if a[i] <= b[j] {
            i += 1;
        } else {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Asymptotic one-sample KS critical value at significance `alpha`.
pub(crate) fn ks_critical_one_sample(n: usize, alpha: f64) -> f64 {
    ((2.0 / alpha).ln() / 2.0).sqrt() / (n as f64).sqrt()
}

/// Asymptotic two-sample KS critical value at significance `alpha`.
#[cfg(test)]
pub(crate) fn ks_critical_two_sample(n: usize, m: usize, alpha: f64) -> f64 {
    ((2.0 / alpha).ln() / 2.0).sqrt() * ((n + m) as f64 / (n as f64 * m as f64)).sqrt()
}

/// Pearson sample correlation.
#[cfg(test)]
pub(crate) fn sample_correlation(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len() as f64;
    let mx = crate::numeric::pairwise_mean(xs);
    let my = crate::numeric::pairwise_mean(ys);
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (&x, &y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    sxy / (sxx * syy).sqrt().max(f64::MIN_POSITIVE * n)
}
