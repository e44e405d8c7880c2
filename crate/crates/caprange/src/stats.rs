//! Estimator summaries: means with standard errors, jackknife variances,
//! weighted line fits, and distribution-shape statistics.

use serde::Serialize;

/// Deterministic pairwise summation; order-fixed, so reductions do not
/// depend on chunking or thread count.
pub fn pairwise_sum(x: &[f64]) -> f64 {
    match x.len() {
        0 => 0.0,
        1 => x[0],
        2 => x[0] + x[1],
        n => {
            let mid = n / 2;
            pairwise_sum(&x[..mid]) + pairwise_sum(&x[mid..])
        }
    }
}

pub fn mean(x: &[f64]) -> f64 {
    pairwise_sum(x) / x.len() as f64
}

/// Unbiased sample variance.
pub fn variance(x: &[f64]) -> f64 {
    let m = mean(x);
    let dev: Vec<f64> = x.iter().map(|v| (v - m) * (v - m)).collect();
    pairwise_sum(&dev) / (x.len() as f64 - 1.0)
}

pub fn stderr_of_mean(x: &[f64]) -> f64 {
    (variance(x) / x.len() as f64).sqrt()
}

/// Delete-one jackknife standard error of an arbitrary statistic.
pub fn jackknife_stderr<F: Fn(&[f64]) -> f64>(x: &[f64], stat: F) -> f64 {
    let n = x.len();
    assert!(n >= 2);
    let mut leave_out = Vec::with_capacity(n - 1);
    let mut reps = Vec::with_capacity(n);
    for i in 0..n {
        leave_out.clear();
        leave_out.extend_from_slice(&x[..i]);
        leave_out.extend_from_slice(&x[i + 1..]);
        reps.push(stat(&leave_out));
    }
    let m = mean(&reps);
    let ss: f64 = reps.iter().map(|r| (r - m) * (r - m)).sum();
    ((n as f64 - 1.0) / n as f64 * ss).sqrt()
}

/// Weighted least squares fit of `y = a x + b` with known per-point sigmas.
#[derive(Debug, Clone, Serialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_stderr: f64,
    pub intercept_stderr: f64,
    pub r_squared: f64,
}

pub fn fit_line_weighted(x: &[f64], y: &[f64], sigma: &[f64]) -> LineFit {
    assert!(x.len() == y.len() && y.len() == sigma.len() && x.len() >= 3);
    let w: Vec<f64> = sigma.iter().map(|s| 1.0 / (s * s)).collect();
    let sw: f64 = w.iter().sum();
    let swx: f64 = w.iter().zip(x).map(|(w, x)| w * x).sum();
    let swy: f64 = w.iter().zip(y).map(|(w, y)| w * y).sum();
    let swxx: f64 = w.iter().zip(x).map(|(w, x)| w * x * x).sum();
    let swxy: f64 = w.iter().zip(x.iter().zip(y)).map(|(w, (x, y))| w * x * y).sum();
    let det = sw * swxx - swx * swx;
    let slope = (sw * swxy - swx * swy) / det;
    let intercept = (swxx * swy - swx * swxy) / det;
    let slope_stderr = (sw / det).sqrt();
    let intercept_stderr = (swxx / det).sqrt();
    let ybar = y.iter().sum::<f64>() / y.len() as f64;
    let ss_tot: f64 = y.iter().map(|v| (v - ybar) * (v - ybar)).sum();
    let ss_res: f64 = x
        .iter()
        .zip(y)
        .map(|(x, y)| {
            let r = y - (slope * x + intercept);
            r * r
        })
        .sum();
    let r_squared = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    LineFit { slope, intercept, slope_stderr, intercept_stderr, r_squared }
}

/// Sample skewness (g1).
pub fn skewness(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let m = mean(x);
    let m2: f64 = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n;
    let m3: f64 = x.iter().map(|v| (v - m).powi(3)).sum::<f64>() / n;
    m3 / m2.powf(1.5)
}

/// Sample excess kurtosis (g2).
pub fn excess_kurtosis(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let m = mean(x);
    let m2: f64 = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n;
    let m4: f64 = x.iter().map(|v| (v - m).powi(4)).sum::<f64>() / n;
    m4 / (m2 * m2) - 3.0
}

/// Central fourth moment.
pub fn central_fourth(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m).powi(4)).sum::<f64>() / x.len() as f64
}

/// erf with absolute error below 1.2e-7 (Abramowitz & Stegun 7.1.26);
/// sufficient for Kolmogorov-Smirnov distances at Monte Carlo sample sizes.
pub fn erf(x: f64) -> f64 {
    let s = if x < 0.0 { -1.0 } else { 1.0 };
    let x = x.abs();
    let t = 1.0 / (1.0 + 0.3275911 * x);
    let y = 1.0
        - (((((1.061405429 * t - 1.453152027) * t) + 1.421413741) * t - 0.284496736) * t
            + 0.254829592)
            * t
            * (-x * x).exp();
    s * y
}

pub fn normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + erf(x / std::f64::consts::SQRT_2))
}

/// Kolmogorov-Smirnov distance between a sample (standardized by the caller)
/// and the standard normal distribution.
pub fn ks_distance_to_normal(sample: &[f64]) -> f64 {
    let mut s = sample.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = s.len() as f64;
    let mut d: f64 = 0.0;
    for (i, v) in s.iter().enumerate() {
        let cdf = normal_cdf(*v);
        d = d.max((cdf - i as f64 / n).abs());
        d = d.max(((i + 1) as f64 / n - cdf).abs());
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::CounterRng;

    #[test]
    fn pairwise_matches_naive() {
        let x: Vec<f64> = (0..1001).map(|i| (i as f64).sqrt()).collect();
        let naive: f64 = x.iter().sum();
        assert!((pairwise_sum(&x) - naive).abs() < 1e-9);
    }

    #[test]
    fn jackknife_of_mean_equals_stderr() {
        let x: Vec<f64> = (0..50).map(|i| ((i * 31 % 17) as f64).cos()).collect();
        let jk = jackknife_stderr(&x, mean);
        let direct = stderr_of_mean(&x);
        assert!((jk - direct).abs() < 1e-12, "{jk} vs {direct}");
    }

    #[test]
    fn line_fit_recovers_exact_line() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y: Vec<f64> = x.iter().map(|v| 2.5 * v - 1.0).collect();
        let s = [0.1; 4];
        let fit = fit_line_weighted(&x, &y, &s);
        assert!((fit.slope - 2.5).abs() < 1e-12);
        assert!((fit.intercept + 1.0).abs() < 1e-12);
        assert!(fit.r_squared > 0.999999);
    }

    #[test]
    fn ks_of_normal_sample_is_small() {
        let mut r = CounterRng::stream(3, 1, 1);
        let x: Vec<f64> = (0..4000).map(|_| r.normal()).collect();
        let d = ks_distance_to_normal(&x);
        assert!(d < 0.03, "KS {d}");
        assert!(skewness(&x).abs() < 0.15);
        assert!(excess_kurtosis(&x).abs() < 0.3);
    }

    #[test]
    fn erf_reference_points() {
        assert!((erf(0.0)).abs() < 2e-7);
        assert!((erf(1.0) - 0.8427007929497149).abs() < 2e-7);
        assert!((erf(-2.0) + 0.9953222650189527).abs() < 2e-7);
    }
}
