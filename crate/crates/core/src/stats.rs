//! Summary statistics, Kolmogorov–Smirnov distances and least-squares fits.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MeanSe {
    pub mean: f64,
    pub se: f64,
    pub n: usize,
}

pub fn mean(x: &[f64]) -> f64 {
    if x.is_empty() {
        return f64::NAN;
    }
    x.iter().sum::<f64>() / x.len() as f64
}

/// Unbiased sample variance.
pub fn variance(x: &[f64]) -> f64 {
    let n = x.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(x);
    x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1) as f64
}

pub fn mean_se(x: &[f64]) -> MeanSe {
    let n = x.len();
    MeanSe { mean: mean(x), se: (variance(x) / n.max(1) as f64).sqrt(), n }
}

pub fn correlation(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len());
    let (mx, my) = (mean(x), mean(y));
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return 0.0;
    }
    sxy / (sxx * syy).sqrt()
}

/// One-sample KS statistic `sup |F_n − F|`.
pub fn ks_statistic<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> f64 {
    let mut s: Vec<f64> = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    let mut d: f64 = 0.0;
    for (i, x) in s.iter().enumerate() {
        let f = cdf(*x);
        d = d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n);
    }
    d
}

/// KS distance against `Normal(0, var)`. Zero variance degenerates to a point mass at 0.
pub fn ks_normal(samples: &[f64], var: f64) -> f64 {
    if var <= 0.0 {
        let n = samples.len() as f64;
        let below = samples.iter().filter(|&&x| x < 0.0).count() as f64;
        let above = samples.iter().filter(|&&x| x > 0.0).count() as f64;
        return (below / n).max(above / n);
    }
    let nd = Normal::new(0.0, var.sqrt()).expect("positive sd");
    ks_statistic(samples, |x| nd.cdf(x))
}

/// Two-sample KS statistic.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let mut x = a.to_vec();
    let mut y = b.to_vec();
    x.sort_by(f64::total_cmp);
    y.sort_by(f64::total_cmp);
    let (n, m) = (x.len() as f64, y.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < x.len() && j < y.len() {
        let t = x[i].min(y[j]);
        while i < x.len() && x[i] <= t {
            i += 1;
        }
        while j < y.len() && y[j] <= t {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    d
}

/// Dvoretzky–Kiefer–Wolfowitz half-width: `P(sup|F_n − F| > w) ≤ 1 − confidence`.
pub fn dkw_halfwidth(n: usize, confidence: f64) -> f64 {
    ((2.0 / (1.0 - confidence)).ln() / (2.0 * n as f64)).sqrt()
}

/// DKW half-width at the one-sigma (68.27 %) level.
pub fn dkw_sigma(n: usize) -> f64 {
    dkw_halfwidth(n, 0.682_689_492_137_086)
}

pub fn normal_cdf(x: f64) -> f64 {
    Normal::standard().cdf(x)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_se: f64,
    pub intercept_se: f64,
}

/// Weighted least squares `y = a + b x` with per-point standard deviations `sigma`.
/// With `sigma = None` the residual scatter sets the scale.
pub fn linear_fit(x: &[f64], y: &[f64], sigma: Option<&[f64]>) -> LineFit {
    let n = x.len();
    assert!(n >= 2 && y.len() == n);
    let w: Vec<f64> = match sigma {
        Some(s) => s.iter().map(|s| 1.0 / (s * s)).collect(),
        None => vec![1.0; n],
    };
    let sw: f64 = w.iter().sum();
    let sx: f64 = w.iter().zip(x).map(|(w, x)| w * x).sum();
    let sy: f64 = w.iter().zip(y).map(|(w, y)| w * y).sum();
    let sxx: f64 = w.iter().zip(x).map(|(w, x)| w * x * x).sum();
    let sxy: f64 = w.iter().zip(x).zip(y).map(|((w, x), y)| w * x * y).sum();
    let det = sw * sxx - sx * sx;
    let slope = (sw * sxy - sx * sy) / det;
    let intercept = (sxx * sy - sx * sxy) / det;
    let mut var_b = sw / det;
    let mut var_a = sxx / det;
    if sigma.is_none() {
        let s2 = if n > 2 {
            x.iter().zip(y).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum::<f64>() / (n - 2) as f64
        } else {
            0.0
        };
        var_b *= s2;
        var_a *= s2;
    }
    LineFit { slope, intercept, slope_se: var_b.sqrt(), intercept_se: var_a.sqrt() }
}

/// Fit `y = b x` through the origin with per-point standard deviations.
pub fn fit_through_origin(x: &[f64], y: &[f64], sigma: &[f64]) -> (f64, f64) {
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for ((x, y), s) in x.iter().zip(y).zip(sigma) {
        let w = 1.0 / (s * s);
        sxy += w * x * y;
        sxx += w * x * x;
    }
    (sxy / sxx, (1.0 / sxx).sqrt())
}

/// Upper 95 % bound for a proportion with zero observed events in `n` trials.
pub fn rule_of_three(n: usize) -> f64 {
    3.0 / n as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ks_uniform_grid() {
        let s: Vec<f64> = (0..100).map(|i| (i as f64 + 0.5) / 100.0).collect();
        let d = ks_statistic(&s, |x| x.clamp(0.0, 1.0));
        assert!((d - 0.005).abs() < 1e-12);
    }

    #[test]
    fn two_sample_identical_is_zero() {
        let a = [0.1, 0.5, 0.2, 0.9];
        assert_eq!(ks_two_sample(&a, &a), 0.0);
        assert!((ks_two_sample(&[0.0, 1.0], &[2.0, 3.0]) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn dkw_at_ten_thousand() {
        assert!((dkw_halfwidth(10_000, 0.99) - 0.0163).abs() < 1e-4);
    }

    #[test]
    fn exact_line() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y = [1.0, 3.0, 5.0, 7.0];
        let f = linear_fit(&x, &y, None);
        assert!((f.slope - 2.0).abs() < 1e-14 && (f.intercept - 1.0).abs() < 1e-14);
        assert!(f.slope_se < 1e-12);
    }
}
