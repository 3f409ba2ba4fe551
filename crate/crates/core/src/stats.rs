//! Statistical machinery shared by the audit tools and the test suites:
//! an energy-distance two-sample test, Kolmogorov-Smirnov statistics,
//! binomial and empirical-Bernstein confidence intervals, empirical total
//! variation, and basic quadrature.

use nalgebra::DVector;
use rand::seq::SliceRandom;
use statrs::distribution::{Beta, ContinuousCDF};

use crate::error::{invalid_input, Result};
use crate::rng::RngStream;

/// Configuration for [`energy_two_sample_test`].
#[derive(Debug, Clone)]
pub struct TwoSampleConfig {
    /// Rejection level of the permutation test.
    pub level: f64,
    /// Cap on points used per side; larger inputs are subsampled so the
    /// pooled pairwise-distance matrix stays tractable.
    pub max_points_per_side: usize,
    /// Number of label permutations for the null distribution.
    pub permutations: usize,
}

impl Default for TwoSampleConfig {
    fn default() -> Self {
        Self {
            level: 0.01,
            max_points_per_side: 1500,
            permutations: 199,
        }
    }
}

/// Result of a two-sample test.
#[derive(Debug, Clone)]
pub struct TwoSampleOutcome {
    pub statistic: f64,
    pub p_value: f64,
    pub reject: bool,
    pub points_per_side: usize,
}

/// Energy-distance two-sample test with a permutation null.
///
/// The statistic is `2 E|X-Y| - E|X-X'| - E|Y-Y'|` over the (sub)sampled
/// points; the p-value comes from random relabelings of the pooled sample.
pub fn energy_two_sample_test(
    xs: &[DVector<f64>],
    ys: &[DVector<f64>],
    config: &TwoSampleConfig,
    rng: &mut RngStream,
) -> Result<TwoSampleOutcome> {
    if xs.is_empty() || ys.is_empty() {
        return Err(invalid_input("two-sample test needs non-empty samples"));
    }
    if xs[0].len() != ys[0].len() {
        return Err(invalid_input("two-sample test needs equal dimensions"));
    }
    if config.level.is_nan() || config.level <= 0.0 || config.level >= 1.0 {
        return Err(invalid_input("test level must lie in (0, 1)"));
    }
    let m = xs.len().min(ys.len()).min(config.max_points_per_side.max(2));

    let pick = |src: &[DVector<f64>], rng: &mut RngStream| -> Vec<DVector<f64>> {
        if src.len() <= m {
            src.to_vec()
        } else {
            rand::seq::index::sample(rng, src.len(), m)
                .iter()
                .map(|i| src[i].clone())
                .collect()
        }
    };
    let sub_x = pick(xs, rng);
    let sub_y = pick(ys, rng);

    // Pooled pairwise distances, stored once and reused for every permutation.
    let pooled: Vec<&DVector<f64>> = sub_x.iter().chain(sub_y.iter()).collect();
    let total = pooled.len();
    let mut dist = vec![0.0f32; total * total];
    for i in 0..total {
        for j in (i + 1)..total {
            let d = (pooled[i] - pooled[j]).norm() as f32;
            dist[i * total + j] = d;
            dist[j * total + i] = d;
        }
    }

    let energy = |labels: &[bool]| -> f64 {
        let mut cross = 0.0f64;
        let mut within_x = 0.0f64;
        let mut within_y = 0.0f64;
        for i in 0..total {
            for j in (i + 1)..total {
                let d = f64::from(dist[i * total + j]);
                match (labels[i], labels[j]) {
                    (true, true) => within_x += d,
                    (false, false) => within_y += d,
                    _ => cross += d,
                }
            }
        }
        let mf = m as f64;
        2.0 * cross / (mf * mf) - 2.0 * within_x / (mf * mf) - 2.0 * within_y / (mf * mf)
    };

    let mut labels: Vec<bool> = (0..total).map(|i| i < m).collect();
    let observed = energy(&labels);
    let mut at_least = 0usize;
    for _ in 0..config.permutations {
        labels.shuffle(rng);
        if energy(&labels) >= observed {
            at_least += 1;
        }
    }
    let p_value = (1 + at_least) as f64 / (config.permutations + 1) as f64;
    Ok(TwoSampleOutcome {
        statistic: observed,
        p_value,
        reject: p_value <= config.level,
        points_per_side: m,
    })
}

/// Kolmogorov-Smirnov statistic of sorted samples against a reference CDF.
pub fn ks_statistic(sorted: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let n = sorted.len() as f64;
    let mut worst = 0.0f64;
    for (i, &x) in sorted.iter().enumerate() {
        let f = cdf(x);
        worst = worst.max((((i + 1) as f64) / n - f).abs());
        worst = worst.max((f - (i as f64) / n).abs());
    }
    worst
}

/// Exact (Clopper-Pearson) lower confidence bound on a binomial proportion;
/// `level` is the allowed one-sided error probability.
pub fn clopper_pearson_lower(successes: u64, trials: u64, level: f64) -> f64 {
    assert!(trials > 0 && level > 0.0 && level < 1.0);
    if successes == 0 {
        return 0.0;
    }
    let beta = Beta::new(successes as f64, (trials - successes + 1) as f64).unwrap();
    beta.inverse_cdf(level)
}

/// Exact (Clopper-Pearson) upper confidence bound on a binomial proportion.
pub fn clopper_pearson_upper(successes: u64, trials: u64, level: f64) -> f64 {
    assert!(trials > 0 && level > 0.0 && level < 1.0);
    if successes == trials {
        return 1.0;
    }
    let beta = Beta::new((successes + 1) as f64, (trials - successes) as f64).unwrap();
    beta.inverse_cdf(1.0 - level)
}

/// Two-sided Clopper-Pearson interval at the given confidence.
pub fn clopper_pearson(successes: u64, trials: u64, confidence: f64) -> (f64, f64) {
    let tail = (1.0 - confidence) / 2.0;
    (
        clopper_pearson_lower(successes, trials, tail),
        clopper_pearson_upper(successes, trials, tail),
    )
}

/// Empirical-Bernstein confidence interval for the mean of values in [0, 1].
pub fn empirical_bernstein_ci(values: &[f64], confidence: f64) -> Result<(f64, f64)> {
    if values.len() < 2 {
        return Err(invalid_input("empirical Bernstein needs at least two values"));
    }
    if values.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(invalid_input("empirical Bernstein needs values in [0, 1]"));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let log_term = (2.0 / (1.0 - confidence)).ln();
    let half = (2.0 * var * log_term / n).sqrt() + 7.0 * log_term / (3.0 * (n - 1.0));
    Ok(((mean - half).max(0.0), (mean + half).min(1.0)))
}

/// Empirical total variation between observed counts and reference
/// probabilities over a finite outcome space.
pub fn empirical_tv(counts: &[u64], probs: &[f64]) -> Result<f64> {
    if counts.len() != probs.len() || counts.is_empty() {
        return Err(invalid_input("counts and probabilities must align"));
    }
    let n: u64 = counts.iter().sum();
    if n == 0 {
        return Err(invalid_input("empirical TV needs at least one observation"));
    }
    Ok(counts
        .iter()
        .zip(probs)
        .map(|(&c, &p)| (c as f64 / n as f64 - p).abs())
        .sum::<f64>()
        / 2.0)
}

/// Plug-in standard error of the empirical TV estimate.
pub fn empirical_tv_standard_error(counts: &[u64]) -> f64 {
    let n: u64 = counts.iter().sum();
    let nf = n as f64;
    counts
        .iter()
        .map(|&c| {
            let p = c as f64 / nf;
            (p * (1.0 - p) / nf).sqrt()
        })
        .sum::<f64>()
        / 2.0
}

/// Composite Simpson quadrature on `[a, b]` with `2 * halves` panels.
pub fn integrate_simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, halves: usize) -> f64 {
    let n = 2 * halves.max(1);
    let h = (b - a) / n as f64;
    let mut acc = f(a) + f(b);
    for k in 1..n {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(a + k as f64 * h);
    }
    acc * h / 3.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::standard_normal_vector;
    use rand::Rng;

    #[test]
    fn energy_test_accepts_identical_distributions() {
        let mut rng = RngStream::new(3);
        let xs: Vec<DVector<f64>> = (0..800).map(|_| standard_normal_vector(3, &mut rng)).collect();
        let ys: Vec<DVector<f64>> = (0..800).map(|_| standard_normal_vector(3, &mut rng)).collect();
        let out = energy_two_sample_test(
            &xs,
            &ys,
            &TwoSampleConfig {
                max_points_per_side: 400,
                permutations: 99,
                ..Default::default()
            },
            &mut rng,
        )
        .unwrap();
        assert!(!out.reject, "p-value {}", out.p_value);
    }

    #[test]
    fn energy_test_detects_mean_shift() {
        let mut rng = RngStream::new(4);
        let xs: Vec<DVector<f64>> = (0..600).map(|_| standard_normal_vector(2, &mut rng)).collect();
        let ys: Vec<DVector<f64>> = (0..600)
            .map(|_| standard_normal_vector(2, &mut rng).add_scalar(1.0))
            .collect();
        let out = energy_two_sample_test(
            &xs,
            &ys,
            &TwoSampleConfig {
                max_points_per_side: 400,
                permutations: 99,
                ..Default::default()
            },
            &mut rng,
        )
        .unwrap();
        assert!(out.reject, "p-value {}", out.p_value);
    }

    #[test]
    fn ks_statistic_of_exact_cdf_is_small() {
        let n = 10_000;
        let sorted: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
        assert!(ks_statistic(&sorted, |x| x) <= 1.0 / n as f64);
    }

    #[test]
    fn clopper_pearson_brackets_truth() {
        let (lo, hi) = clopper_pearson(50, 100, 0.95);
        assert!(lo < 0.5 && 0.5 < hi);
        assert!(clopper_pearson_lower(0, 100, 0.05) == 0.0);
        assert!(clopper_pearson_upper(100, 100, 0.05) == 1.0);
        // Rule-of-three sanity: zero successes in n trials at 95%.
        let hi = clopper_pearson_upper(0, 1000, 0.05);
        assert!((hi - 3.0 / 1000.0).abs() < 0.5e-3);
    }

    #[test]
    fn empirical_bernstein_contains_mean() {
        let mut rng = RngStream::new(6);
        let values: Vec<f64> = (0..5000).map(|_| rng.gen::<f64>()).collect();
        let (lo, hi) = empirical_bernstein_ci(&values, 0.95).unwrap();
        assert!(lo < 0.5 && 0.5 < hi);
        assert!(hi - lo < 0.1);
    }

    #[test]
    fn empirical_tv_on_exact_counts_is_zero() {
        let tv = empirical_tv(&[25, 25, 25, 25], &[0.25; 4]).unwrap();
        assert_eq!(tv, 0.0);
        let tv = empirical_tv(&[100, 0], &[0.5, 0.5]).unwrap();
        assert_eq!(tv, 0.5);
    }

    #[test]
    fn simpson_integrates_polynomials_exactly() {
        let got = integrate_simpson(|x| x * x * x, 0.0, 2.0, 100);
        assert!((got - 4.0).abs() < 1e-10);
        let gauss = integrate_simpson(
            |x| (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt(),
            -10.0,
            10.0,
            2000,
        );
        assert!((gauss - 1.0).abs() < 1e-10);
    }
}
