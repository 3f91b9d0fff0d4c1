//! Small numeric helpers shared by the metafeature and harness code.

use alloc::vec::Vec;

pub fn mean(xs: &[f64]) -> Option<f64> {
    if xs.is_empty() {
        None
    } else {
        Some(xs.iter().sum::<f64>() / xs.len() as f64)
    }
}

/// Population central moments `(mean, m2, m3, m4)`.
pub fn central_moments(xs: &[f64]) -> Option<(f64, f64, f64, f64)> {
    let mu = mean(xs)?;
    let n = xs.len() as f64;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for &x in xs {
        let d = x - mu;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    Some((mu, m2 / n, m3 / n, m4 / n))
}

/// Population standard deviation.
pub fn std_dev(xs: &[f64]) -> Option<f64> {
    central_moments(xs).map(|(_, m2, _, _)| libm::sqrt(m2))
}

/// Moment skewness `m3 / m2^1.5`; undefined for constant input.
pub fn skewness(xs: &[f64]) -> Option<f64> {
    let (_, m2, m3, _) = central_moments(xs)?;
    if m2 <= 0.0 {
        return None;
    }
    Some(m3 / libm::pow(m2, 1.5))
}

/// Excess kurtosis `m4 / m2^2 - 3`; undefined for constant input.
pub fn excess_kurtosis(xs: &[f64]) -> Option<f64> {
    let (_, m2, _, m4) = central_moments(xs)?;
    if m2 <= 0.0 {
        return None;
    }
    Some(m4 / (m2 * m2) - 3.0)
}

/// Pearson correlation; `None` if either side has zero variance.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Option<f64> {
    assert_eq!(xs.len(), ys.len());
    let mx = mean(xs)?;
    let my = mean(ys)?;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (&x, &y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return None;
    }
    Some((sxy / libm::sqrt(sxx * syy)).clamp(-1.0, 1.0))
}

/// Median of a sample; averages the two middle values for even sizes.
pub fn median(xs: &[f64]) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    let mut v: Vec<f64> = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

/// Percentile of a sorted sample with linear interpolation, `q` in `[0, 1]`.
pub fn percentile_sorted(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = libm::floor(pos) as usize;
    let hi = libm::ceil(pos) as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}
