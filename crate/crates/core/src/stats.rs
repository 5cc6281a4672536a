//! Goodness-of-fit and estimation helpers.
//!
//! p-values are asymptotic: the Kolmogorov limit law (with the usual
//! `sqrt(n) + 0.12 + 0.11/sqrt(n)` small-sample correction) and the
//! chi-square law for Pearson's statistic. Both are accurate well beyond the
//! 1e-3 thresholds used here once n is in the thousands.

use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{param, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: f64,
    pub n: usize,
}

impl TestResult {
    pub fn passes(&self, alpha: f64) -> bool {
        self.p_value > alpha
    }
}

/// Survival function of the Kolmogorov distribution, `P(K > lambda)`.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..=200 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += sign * term;
        if term < 1e-18 {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

fn ks_p_value(d: f64, n_eff: f64) -> f64 {
    let sn = n_eff.sqrt();
    kolmogorov_sf((sn + 0.12 + 0.11 / sn) * d)
}

/// One-sample Kolmogorov–Smirnov test against a continuous CDF.
pub fn ks_test(samples: &[f64], cdf: impl Fn(f64) -> f64) -> Result<TestResult> {
    if samples.is_empty() {
        return param("KS test needs at least one sample");
    }
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        let f = cdf(x);
        d = d.max(f - i as f64 / n).max((i + 1) as f64 / n - f);
    }
    Ok(TestResult {
        statistic: d,
        p_value: ks_p_value(d, n),
        n: xs.len(),
    })
}

/// Two-sample Kolmogorov–Smirnov test.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<TestResult> {
    if a.is_empty() || b.is_empty() {
        return param("two-sample KS test needs non-empty samples");
    }
    let mut xs = a.to_vec();
    let mut ys = b.to_vec();
    xs.sort_by(f64::total_cmp);
    ys.sort_by(f64::total_cmp);
    let (n, m) = (xs.len() as f64, ys.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < xs.len() && j < ys.len() {
        let v = xs[i].min(ys[j]);
        while i < xs.len() && xs[i] <= v {
            i += 1;
        }
        while j < ys.len() && ys[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    Ok(TestResult {
        statistic: d,
        p_value: ks_p_value(d, n * m / (n + m)),
        n: xs.len() + ys.len(),
    })
}

/// Pearson chi-square test of counts against the uniform distribution,
/// with `k - 1` degrees of freedom.
pub fn chi_square_uniform(counts: &[u64]) -> Result<TestResult> {
    let k = counts.len();
    if k < 2 {
        return param("chi-square test needs at least two categories");
    }
    let total: u64 = counts.iter().sum();
    if total < 5 * k as u64 {
        return param(format!(
            "chi-square test needs at least {} observations, got {total}",
            5 * k
        ));
    }
    let expected = total as f64 / k as f64;
    let statistic: f64 = counts
        .iter()
        .map(|&c| {
            let d = c as f64 - expected;
            d * d / expected
        })
        .sum();
    let chi = ChiSquared::new((k - 1) as f64).expect("positive degrees of freedom");
    Ok(TestResult {
        statistic,
        p_value: chi.sf(statistic).clamp(0.0, 1.0),
        n: total as usize,
    })
}

/// Sample mean and its standard error `s / sqrt(n)`.
pub fn mean_with_ci(samples: &[f64]) -> Result<(f64, f64)> {
    let n = samples.len();
    if n < 2 {
        return param(format!("need at least two samples, got {n}"));
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    Ok((mean, (var / n as f64).sqrt()))
}

/// Pearson correlation coefficient.
pub fn correlation(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return param("correlation needs two equal-length samples of size >= 2");
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    Ok(sab / (saa * sbb).sqrt())
}

/// Sample covariance of two columns together with a standard error, taken
/// from the spread of the centred products.
pub fn covariance_with_se(a: &[f64], b: &[f64]) -> Result<(f64, f64)> {
    if a.len() != b.len() || a.len() < 2 {
        return param("covariance needs two equal-length samples of size >= 2");
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let products: Vec<f64> = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).collect();
    let (mean, se) = mean_with_ci(&products)?;
    Ok((mean * n / (n - 1.0), se))
}
