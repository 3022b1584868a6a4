//! Small statistical helpers shared by the verification routines.

use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

/// Sample mean and unbiased variance. Variance is 0 for n < 2.
pub fn mean_and_variance(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, 0.0);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let ss = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>();
    (mean, ss / (n - 1) as f64)
}

/// Mean with a 95% normal-approximation half width.
pub fn mean_ci95(xs: &[f64]) -> (f64, f64) {
    let (mean, var) = mean_and_variance(xs);
    if xs.len() < 2 {
        return (mean, f64::INFINITY);
    }
    (mean, 1.96 * (var / xs.len() as f64).sqrt())
}

/// Lag-1 sample autocorrelation; 0 for constant or short series.
pub fn lag1_autocorrelation(xs: &[f64]) -> f64 {
    if xs.len() < 3 {
        return 0.0;
    }
    let (mean, var) = mean_and_variance(xs);
    if var == 0.0 {
        return 0.0;
    }
    let n = xs.len();
    let cov = xs
        .windows(2)
        .map(|w| (w[0] - mean) * (w[1] - mean))
        .sum::<f64>()
        / (n - 1) as f64;
    cov / var
}

/// Kolmogorov-Smirnov distance between a sample and the standard normal.
pub fn ks_distance_standard_normal(samples: &[f64]) -> f64 {
    assert!(!samples.is_empty());
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len() as f64;
    let mut d: f64 = 0.0;
    for (i, x) in sorted.iter().enumerate() {
        let f = normal.cdf(*x);
        d = d.max(f - i as f64 / n).max((i + 1) as f64 / n - f);
    }
    d
}

#[derive(Clone, Debug, Serialize)]
pub struct GofResult {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
    pub bins: usize,
}

/// Pearson chi-square against fully specified category probabilities.
/// Callers are responsible for sensible binning (expected counts >= ~5).
pub fn chi_square_gof(observed: &[u64], probs: &[f64]) -> GofResult {
    assert_eq!(observed.len(), probs.len());
    assert!(!observed.is_empty());
    let n: u64 = observed.iter().sum();
    let mut statistic = 0.0;
    for (&o, &p) in observed.iter().zip(probs) {
        let expected = n as f64 * p;
        if expected > 0.0 {
            let diff = o as f64 - expected;
            statistic += diff * diff / expected;
        } else if o > 0 {
            statistic = f64::INFINITY;
        }
    }
    let dof = observed.len().saturating_sub(1);
    let p_value = if dof == 0 {
        if statistic < 1e-9 {
            1.0
        } else {
            0.0
        }
    } else if !statistic.is_finite() {
        0.0
    } else {
        1.0 - ChiSquared::new(dof as f64).unwrap().cdf(statistic)
    };
    GofResult {
        statistic,
        dof,
        p_value,
        bins: observed.len(),
    }
}

/// Bin positive-integer samples against a pmf, pooling consecutive values
/// until each bin expects at least `min_expected`, with one tail bin.
/// pmf(k) is queried for k = 1.. until the remaining tail mass is absorbed.
pub fn gof_integer_law(
    samples: &[u32],
    pmf: impl Fn(u32) -> f64,
    max_k: u32,
    min_expected: f64,
) -> GofResult {
    assert!(!samples.is_empty());
    let n = samples.len() as f64;
    let mut edges: Vec<u32> = Vec::new(); // inclusive upper edge per bin
    let mut probs: Vec<f64> = Vec::new();
    let mut acc = 0.0;
    for k in 1..=max_k {
        acc += pmf(k);
        if acc * n >= min_expected {
            edges.push(k);
            probs.push(acc);
            acc = 0.0;
        }
    }
    // absorb the remainder into a final open bin
    let tail = 1.0 - probs.iter().sum::<f64>();
    if tail > 0.0 || edges.is_empty() {
        edges.push(u32::MAX);
        probs.push(tail.max(0.0));
    } else {
        *edges.last_mut().unwrap() = u32::MAX;
    }
    let mut observed = vec![0u64; edges.len()];
    for &s in samples {
        let idx = edges.partition_point(|&e| e < s);
        observed[idx] += 1;
    }
    chi_square_gof(&observed, &probs)
}

#[derive(Clone, Debug, Serialize)]
pub struct OlsFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_se: f64,
    pub r2: f64,
}

/// Ordinary least squares of y on x.
pub fn ols_fit(xs: &[f64], ys: &[f64]) -> OlsFit {
    assert_eq!(xs.len(), ys.len());
    assert!(xs.len() >= 3, "need at least 3 points for a fit");
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| {
            let e = y - (intercept + slope * x);
            e * e
        })
        .sum();
    let dof = n - 2.0;
    let slope_se = if dof > 0.0 {
        (ss_res / dof / sxx).sqrt()
    } else {
        f64::INFINITY
    };
    let r2 = if syy > 0.0 { 1.0 - ss_res / syy } else { 1.0 };
    OlsFit {
        slope,
        intercept,
        slope_se,
        r2,
    }
}
