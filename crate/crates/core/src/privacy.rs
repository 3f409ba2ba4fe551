//! Privacy accounting and empirical verification: composition and
//! subsampling arithmetic, hockey-stick divergence estimation, a
//! confidence-bounded epsilon audit, and a subsample-and-learn covariance
//! estimation experiment.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::SampleMatrix;
use crate::error::{invalid_input, Result};
use crate::numerics::{min_eigenvalue, symmetrize};
use crate::rng::RngStream;
use crate::stats::{clopper_pearson_lower, clopper_pearson_upper, empirical_bernstein_ci};

/// An (epsilon, delta) privacy budget.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivacyBudget {
    pub eps: f64,
    pub delta: f64,
}

impl PrivacyBudget {
    pub fn new(eps: f64, delta: f64) -> Result<Self> {
        let budget = Self { eps, delta };
        budget.validate()?;
        Ok(budget)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.eps.is_finite() || self.eps <= 0.0 {
            return Err(invalid_input(format!("eps must be positive, got {}", self.eps)));
        }
        if self.delta.is_nan() || self.delta < 0.0 || self.delta >= 1.0 {
            return Err(invalid_input(format!(
                "delta must lie in [0, 1), got {}",
                self.delta
            )));
        }
        Ok(())
    }

    /// Budget with both components halved, for two-stage compositions.
    pub fn halved(&self) -> Self {
        Self {
            eps: self.eps / 2.0,
            delta: self.delta / 2.0,
        }
    }

    /// Componentwise sum (basic composition).
    pub fn plus(&self, other: &PrivacyBudget) -> Self {
        Self {
            eps: self.eps + other.eps,
            delta: self.delta + other.delta,
        }
    }
}

/// Inputs of the k-fold composition bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompositionQuery {
    /// Per-invocation epsilon.
    pub eps0: f64,
    /// Per-invocation delta (zero allowed).
    pub delta0: f64,
    /// Number of invocations.
    pub k: u64,
    /// Slack delta of the composition bound, in (0, 1/2].
    pub delta1: f64,
}

/// Composition of `k` runs of an `(eps0, delta0)` mechanism:
/// `eps1 = (sqrt(2 k ln(1/delta1)) + k (e^{eps0} - 1)) * eps0`, with total
/// failure mass `k * delta0 + delta1`.
pub fn advanced_composition(query: &CompositionQuery) -> Result<PrivacyBudget> {
    if !query.eps0.is_finite() || query.eps0 <= 0.0 {
        return Err(invalid_input(format!("eps0 must be positive, got {}", query.eps0)));
    }
    if query.delta0.is_nan() || query.delta0 < 0.0 || query.delta0 > 0.5 {
        return Err(invalid_input(format!(
            "delta0 must lie in [0, 1/2], got {}",
            query.delta0
        )));
    }
    if query.delta1.is_nan() || query.delta1 <= 0.0 || query.delta1 > 0.5 {
        return Err(invalid_input(format!(
            "delta1 must lie in (0, 1/2], got {}",
            query.delta1
        )));
    }
    if query.k == 0 {
        return Err(invalid_input("k must be at least 1"));
    }
    let k = query.k as f64;
    let eps1 = ((2.0 * k * (1.0 / query.delta1).ln()).sqrt()
        + k * (query.eps0.exp() - 1.0))
        * query.eps0;
    Ok(PrivacyBudget {
        eps: eps1,
        delta: k * query.delta0 + query.delta1,
    })
}

/// Privacy of running an `(eps, delta)` mechanism on a uniform
/// without-replacement subsample of `n` out of `total` records:
/// `eps' = ln(1 + (n/total)(e^eps - 1))`, `delta' = (n/total) delta`.
pub fn subsampling_amplification(
    eps: f64,
    delta: f64,
    n: usize,
    total: usize,
) -> Result<PrivacyBudget> {
    if !eps.is_finite() || eps <= 0.0 {
        return Err(invalid_input(format!("eps must be positive, got {eps}")));
    }
    if delta.is_nan() || !(0.0..1.0).contains(&delta) {
        return Err(invalid_input(format!("delta must lie in [0, 1), got {delta}")));
    }
    if n == 0 || n > total {
        return Err(invalid_input(format!(
            "subsample size {n} must lie in [1, {total}]"
        )));
    }
    let ratio = n as f64 / total as f64;
    Ok(PrivacyBudget {
        eps: (1.0 + ratio * (eps.exp() - 1.0)).ln(),
        delta: ratio * delta,
    })
}

/// Monte Carlo estimate of the epsilon-hockey-stick divergence
/// `d_eps(P || Q) = E_{y ~ P}[(1 - e^{eps} f_Q(y) / f_P(y))_+]`, together with
/// the upper bound `Pr_{y ~ P}[f_P(y) > e^{eps} f_Q(y)]`.
#[derive(Debug, Clone, Serialize)]
pub struct HockeyStickEstimate {
    /// Estimate of the divergence itself (integrand form).
    pub divergence: f64,
    /// Monte Carlo standard error of the divergence estimate.
    pub divergence_std_error: f64,
    /// Empirical-Bernstein interval for the divergence.
    pub divergence_ci: (f64, f64),
    /// Estimate of the probability-form upper bound.
    pub probability_bound: f64,
    /// Clopper-Pearson interval for the probability form.
    pub probability_ci: (f64, f64),
    pub trials: usize,
    pub confidence: f64,
}

/// Estimates the hockey-stick divergence between two distributions given
/// their log densities and a sampler for `P`.
pub fn hockey_stick_estimate<T>(
    logpdf_p: impl Fn(&T) -> f64,
    logpdf_q: impl Fn(&T) -> f64,
    eps: f64,
    mut sample_p: impl FnMut(&mut RngStream) -> T,
    trials: usize,
    confidence: f64,
    rng: &mut RngStream,
) -> Result<HockeyStickEstimate> {
    if trials < 2 {
        return Err(invalid_input("hockey-stick estimation needs at least two trials"));
    }
    if !eps.is_finite() || eps < 0.0 {
        return Err(invalid_input(format!("eps must be nonnegative, got {eps}")));
    }
    if confidence.is_nan() || confidence <= 0.0 || confidence >= 1.0 {
        return Err(invalid_input("confidence must lie in (0, 1)"));
    }
    let mut integrand = Vec::with_capacity(trials);
    let mut exceed = 0u64;
    for _ in 0..trials {
        let y = sample_p(rng);
        let lp = logpdf_p(&y);
        let lq = logpdf_q(&y);
        if !lp.is_finite() || lq.is_nan() || lq == f64::INFINITY {
            return Err(invalid_input(
                "log densities must be finite at sampled points (log Q may be -inf)",
            ));
        }
        let log_ratio = eps + lq - lp;
        let value = if log_ratio >= 0.0 { 0.0 } else { 1.0 - log_ratio.exp() };
        if value > 0.0 {
            exceed += 1;
        }
        integrand.push(value);
    }
    let divergence = integrand.iter().sum::<f64>() / trials as f64;
    let variance = integrand
        .iter()
        .map(|v| (v - divergence).powi(2))
        .sum::<f64>()
        / (trials as f64 - 1.0);
    let divergence_std_error = (variance / trials as f64).sqrt();
    let divergence_ci = empirical_bernstein_ci(&integrand, confidence)?;
    let probability_bound = exceed as f64 / trials as f64;
    let tail = (1.0 - confidence) / 2.0;
    let probability_ci = (
        clopper_pearson_lower(exceed, trials as u64, tail),
        clopper_pearson_upper(exceed, trials as u64, tail),
    );
    // The integrand is dominated pointwise by the exceedance indicator.
    debug_assert!(divergence <= probability_bound + 1e-12);
    Ok(HockeyStickEstimate {
        divergence,
        divergence_std_error,
        divergence_ci,
        probability_bound,
        probability_ci,
        trials,
        confidence,
    })
}

/// Family of output events searched by the epsilon audit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum EventFamily {
    /// Half-space threshold events on the 1-d projection of outputs; the
    /// thresholds are placed at pooled quantiles from a held-out fraction
    /// of the trials.
    HalfSpaceThresholds { count: usize },
    /// Fixed thresholds supplied by the caller.
    FixedThresholds(Vec<f64>),
}

impl EventFamily {
    fn label(&self) -> String {
        match self {
            EventFamily::HalfSpaceThresholds { count } => {
                format!("half-space thresholds (quantile grid of {count})")
            }
            EventFamily::FixedThresholds(t) => format!("fixed thresholds ({})", t.len()),
        }
    }
}

/// Result of an empirical epsilon audit; serialized as the machine-readable
/// audit artifact.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AuditReport {
    pub mechanism: String,
    pub eps_declared: f64,
    pub eps_lower_bound: f64,
    pub confidence: f64,
    pub trials: usize,
    pub events_family: String,
    pub non_private_components: Vec<String>,
}

/// Estimates a lower confidence bound on the epsilon of a mechanism by
/// running it on a fixed neighboring dataset pair.
///
/// `run_left` and `run_right` produce a 1-d projection of the mechanism
/// output on the two datasets. For every event S in the family and both
/// orderings, the audit lower-bounds `ln((Pr[M(Y) in S] - delta) /
/// Pr[M(Y') in S])` with exact binomial bounds, union-corrected over the
/// whole family, so the reported bound never claims more than the trials
/// support.
#[allow(clippy::too_many_arguments)]
pub fn empirical_epsilon_audit(
    mechanism_label: &str,
    eps_declared: f64,
    delta_assumed: f64,
    mut run_left: impl FnMut(&mut RngStream) -> Result<f64>,
    mut run_right: impl FnMut(&mut RngStream) -> Result<f64>,
    events: &EventFamily,
    trials: usize,
    confidence: f64,
    non_private_components: Vec<String>,
    rng: &mut RngStream,
) -> Result<AuditReport> {
    if trials == 0 {
        return Err(invalid_input("audit needs at least one trial"));
    }
    if confidence.is_nan() || confidence <= 0.0 || confidence >= 1.0 {
        return Err(invalid_input("confidence must lie in (0, 1)"));
    }

    // Hold out a slice of trials to pick thresholds, so the bounds are
    // computed on fresh draws.
    let holdout = match events {
        EventFamily::HalfSpaceThresholds { .. } => (trials / 5).max(1).min(trials - 1).max(1),
        EventFamily::FixedThresholds(_) => 0,
    };
    let measured = trials - holdout;
    if measured == 0 {
        return Err(invalid_input("audit needs at least one measured trial"));
    }

    let thresholds: Vec<f64> = match events {
        EventFamily::FixedThresholds(t) => t.clone(),
        EventFamily::HalfSpaceThresholds { count } => {
            let mut pooled = Vec::with_capacity(2 * holdout);
            for _ in 0..holdout {
                pooled.push(run_left(rng)?);
                pooled.push(run_right(rng)?);
            }
            pooled.sort_by(f64::total_cmp);
            let count = (*count).max(1);
            (1..=count)
                .map(|k| {
                    let q = k as f64 / (count + 1) as f64;
                    pooled[((q * pooled.len() as f64) as usize).min(pooled.len() - 1)]
                })
                .collect()
        }
    };
    if thresholds.is_empty() {
        return Err(invalid_input("audit event family is empty"));
    }

    let mut above_left = vec![0u64; thresholds.len()];
    let mut above_right = vec![0u64; thresholds.len()];
    for _ in 0..measured {
        let l = run_left(rng)?;
        let r = run_right(rng)?;
        for (t_idx, &t) in thresholds.iter().enumerate() {
            if l > t {
                above_left[t_idx] += 1;
            }
            if r > t {
                above_right[t_idx] += 1;
            }
        }
    }

    // One-sided error budget split over every bound in the family:
    // |thresholds| events x {above, below} x {two orderings} x {lower, upper}.
    let bounds_count = (thresholds.len() * 8) as f64;
    let level = ((1.0 - confidence) / bounds_count).max(1e-12);
    let n = measured as u64;

    let mut best = 0.0f64;
    for t_idx in 0..thresholds.len() {
        for (count_l, count_r) in [
            (above_left[t_idx], above_right[t_idx]),
            (n - above_left[t_idx], n - above_right[t_idx]),
        ] {
            for (hi_count, lo_count) in [(count_l, count_r), (count_r, count_l)] {
                let p_lo = clopper_pearson_lower(hi_count, n, level);
                let q_hi = clopper_pearson_upper(lo_count, n, level);
                let numerator = p_lo - delta_assumed;
                if numerator > 0.0 && q_hi > 0.0 {
                    best = best.max((numerator / q_hi).ln());
                }
            }
        }
    }

    Ok(AuditReport {
        mechanism: mechanism_label.to_string(),
        eps_declared,
        eps_lower_bound: best.max(0.0),
        confidence,
        trials,
        events_family: events.label(),
        non_private_components,
    })
}

/// Configuration of the covariance estimation experiment.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EstimatorConfig {
    /// Total number of available records.
    pub total_samples: usize,
    /// Records drawn (without replacement) per round.
    pub subsample: usize,
    /// Number of rounds, i.e. generated draws fed to the learner.
    pub rounds: usize,
    /// Target accuracy parameter; only recorded, the experiment reports raw
    /// error rather than a pass/fail against it.
    pub xi: f64,
}

/// Output of the covariance estimation experiment.
#[derive(Debug, Clone)]
pub struct CovarianceEstimate {
    /// The estimate after the spectral clamp: either the learner output
    /// (when `0.5 I <= est <= 2.5 I`) or the identity.
    pub sigma: DMatrix<f64>,
    pub clamped_to_identity: bool,
    /// Rounds whose sampler returned no draw.
    pub aborted_rounds: usize,
    /// Per-round budget after subsampling amplification.
    pub per_round_budget: PrivacyBudget,
    /// Budget of the whole experiment via composition of the rounds.
    pub composed_budget: PrivacyBudget,
    pub non_private_components: Vec<String>,
}

/// Runs the subsample -> sample -> learn covariance experiment: each round
/// feeds an n-of-N random subsample to the sampler, the learner fits a
/// centered Gaussian to the collected draws, and the result is clamped to
/// the identity unless `0.5 I <= estimate <= 2.5 I`.
#[allow(clippy::too_many_arguments)]
pub fn covariance_estimator_pipeline(
    config: &EstimatorConfig,
    mut sampler: impl FnMut(&SampleMatrix, &mut RngStream) -> Result<Option<DVector<f64>>>,
    learner: impl Fn(&SampleMatrix) -> Result<DMatrix<f64>>,
    data: &SampleMatrix,
    sampler_budget: PrivacyBudget,
    sampler_is_private: bool,
    learner_is_private: bool,
    rng: &mut RngStream,
) -> Result<CovarianceEstimate> {
    if config.subsample == 0 || config.subsample > config.total_samples {
        return Err(invalid_input(format!(
            "subsample {} must lie in [1, {}]",
            config.subsample, config.total_samples
        )));
    }
    if data.n_rows() != config.total_samples {
        return Err(invalid_input(format!(
            "data has {} rows, config declares {}",
            data.n_rows(),
            config.total_samples
        )));
    }
    if config.rounds == 0 {
        return Err(invalid_input("at least one round is required"));
    }
    if config.xi.is_nan() || config.xi <= 0.0 || config.xi > 0.01 {
        return Err(invalid_input(format!("xi must lie in (0, 0.01], got {}", config.xi)));
    }

    let d = data.dim();
    let mut draws: Vec<DVector<f64>> = Vec::with_capacity(config.rounds);
    let mut aborted = 0usize;
    for _ in 0..config.rounds {
        let picked = rand::seq::index::sample(rng, config.total_samples, config.subsample);
        let rows: Vec<DVector<f64>> = picked.iter().map(|i| data.row(i)).collect();
        let subsample = SampleMatrix::from_rows(&rows)?;
        match sampler(&subsample, rng)? {
            Some(y) => draws.push(y),
            None => aborted += 1,
        }
    }
    if draws.len() <= d {
        return Err(invalid_input(format!(
            "only {} non-aborted draws for dimension {d}; learner needs more",
            draws.len()
        )));
    }
    let estimate = learner(&SampleMatrix::from_rows(&draws)?)?;
    let sym = symmetrize(&estimate);
    let min = min_eigenvalue(&sym)?;
    let max = -min_eigenvalue(&(-&sym))?;
    let inside = min >= 0.5 - 1e-12 && max <= 2.5 + 1e-12;
    let (sigma, clamped) = if inside {
        (sym, false)
    } else {
        (DMatrix::identity(d, d), true)
    };

    // Accounting chain: amplify the sampler budget by the subsampling ratio,
    // then compose the rounds; the learner is post-processing.
    let per_round =
        subsampling_amplification(sampler_budget.eps, sampler_budget.delta, config.subsample, config.total_samples)?;
    let delta1 = (config.rounds as f64 * per_round.delta).clamp(1e-12, 0.5);
    let composed = advanced_composition(&CompositionQuery {
        eps0: per_round.eps,
        delta0: per_round.delta,
        k: config.rounds as u64,
        delta1,
    })?;

    let mut non_private = Vec::new();
    if !sampler_is_private {
        non_private.push("sampler".to_string());
    }
    if !learner_is_private {
        non_private.push("learner".to_string());
    }

    Ok(CovarianceEstimate {
        sigma,
        clamped_to_identity: clamped,
        aborted_rounds: aborted,
        per_round_budget: per_round,
        composed_budget: composed,
        non_private_components: non_private,
    })
}

/// Centered second-moment estimate, the stand-in for an agnostic learner of
/// centered Gaussians. Requires at least d + 1 rows.
pub fn agnostic_centered_gaussian_learner(samples: &SampleMatrix) -> Result<DMatrix<f64>> {
    let d = samples.dim();
    if samples.n_rows() < d + 1 {
        return Err(invalid_input(format!(
            "need at least {} rows for dimension {d}, got {}",
            d + 1,
            samples.n_rows()
        )));
    }
    let mut acc = DMatrix::zeros(d, d);
    for i in 0..samples.n_rows() {
        let x = samples.row(i);
        acc += &x * x.transpose();
    }
    Ok(acc / samples.n_rows() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::standard_normal_vector;
    use rand::Rng;
    use statrs::distribution::{ContinuousCDF, Normal};

    #[test]
    fn advanced_composition_single_round_example() {
        // k = 1, eps0 = 0.1, delta0 = 0, delta1 = e^{-2}.
        let out = advanced_composition(&CompositionQuery {
            eps0: 0.1,
            delta0: 0.0,
            k: 1,
            delta1: (-2.0f64).exp(),
        })
        .unwrap();
        let expected = (2.0 + (0.1f64.exp() - 1.0)) * 0.1;
        assert!((out.eps - expected).abs() < 1e-15);
        assert!((out.delta - (-2.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn advanced_composition_delta_part() {
        let out = advanced_composition(&CompositionQuery {
            eps0: 0.1,
            delta0: 1e-6,
            k: 10,
            delta1: 1e-6,
        })
        .unwrap();
        assert!((out.delta - 1.1e-5).abs() < 1e-18);
    }

    #[test]
    fn advanced_composition_monotone_in_k() {
        let q = |k| CompositionQuery {
            eps0: 0.2,
            delta0: 1e-7,
            k,
            delta1: 1e-6,
        };
        let e2 = advanced_composition(&q(2)).unwrap().eps;
        let e4 = advanced_composition(&q(4)).unwrap().eps;
        assert!(e4 > e2);
    }

    #[test]
    fn subsampling_examples() {
        let out = subsampling_amplification(2.0f64.ln(), 0.1, 1, 2).unwrap();
        assert!((out.eps - 1.5f64.ln()).abs() < 1e-15);
        let out = subsampling_amplification(1.0, 0.1, 10, 100).unwrap();
        assert!((out.delta - 0.01).abs() < 1e-15);
        let out = subsampling_amplification(0.7, 0.0, 5, 5).unwrap();
        assert!((out.eps - 0.7).abs() < 1e-15);
        assert!(subsampling_amplification(1.0, 0.1, 6, 5).is_err());
    }

    fn normal_logpdf(mean: f64) -> impl Fn(&f64) -> f64 {
        move |x: &f64| {
            -0.5 * (x - mean).powi(2) - 0.5 * (2.0 * std::f64::consts::PI).ln()
        }
    }

    #[test]
    fn hockey_stick_identical_distributions() {
        let mut rng = RngStream::new(5);
        let est = hockey_stick_estimate(
            normal_logpdf(0.0),
            normal_logpdf(0.0),
            0.0,
            |rng| standard_normal_vector(1, rng)[0],
            20_000,
            0.95,
            &mut rng,
        )
        .unwrap();
        assert!(est.divergence <= est.divergence_ci.1);
        assert!(est.divergence_ci.0 <= 1e-9, "lower CI {:?}", est.divergence_ci);
        assert!(est.divergence <= est.probability_bound + 1e-12);
    }

    #[test]
    fn hockey_stick_matches_gaussian_tv() {
        // d_0(N(0,1) || N(1,1)) = TV = 2 Phi(1/2) - 1.
        let mut rng = RngStream::new(6);
        let est = hockey_stick_estimate(
            normal_logpdf(0.0),
            normal_logpdf(1.0),
            0.0,
            |rng| standard_normal_vector(1, rng)[0],
            200_000,
            0.95,
            &mut rng,
        )
        .unwrap();
        let phi = Normal::new(0.0, 1.0).unwrap();
        let truth = 2.0 * phi.cdf(0.5) - 1.0;
        assert!(
            (est.divergence - truth).abs() <= 0.005,
            "estimate {} vs truth {truth}",
            est.divergence
        );
        assert!(est.divergence_ci.0 <= truth && truth <= est.divergence_ci.1);
    }

    #[test]
    fn hockey_stick_nonincreasing_in_eps() {
        let mut prev = f64::INFINITY;
        for &eps in &[0.0, 0.25, 0.5, 1.0, 2.0] {
            // Fresh stream per eps keeps the draws identical across the grid.
            let mut rng = RngStream::new(77);
            let est = hockey_stick_estimate(
                normal_logpdf(0.0),
                normal_logpdf(1.0),
                eps,
                |rng| standard_normal_vector(1, rng)[0],
                50_000,
                0.95,
                &mut rng,
            )
            .unwrap();
            assert!(est.divergence <= prev + 1e-12);
            prev = est.divergence;
        }
    }

    #[test]
    fn audit_of_constant_mechanism_is_zero() {
        let mut rng = RngStream::new(9);
        let report = empirical_epsilon_audit(
            "constant",
            1.0,
            0.0,
            |_| Ok(0.0),
            |_| Ok(0.0),
            &EventFamily::HalfSpaceThresholds { count: 9 },
            2_000,
            0.95,
            vec![],
            &mut rng,
        )
        .unwrap();
        assert_eq!(report.eps_lower_bound, 0.0);
    }

    #[test]
    fn audit_flags_verbatim_release() {
        // Mechanism that outputs the differing record in the clear.
        let mut rng = RngStream::new(10);
        let report = empirical_epsilon_audit(
            "leaky",
            1.0,
            1e-6,
            |_| Ok(0.0),
            |_| Ok(10.0),
            &EventFamily::HalfSpaceThresholds { count: 9 },
            10_000,
            0.95,
            vec![],
            &mut rng,
        )
        .unwrap();
        assert!(report.eps_lower_bound > 2.0, "bound {}", report.eps_lower_bound);
    }

    #[test]
    fn audit_respects_true_epsilon_of_randomized_response() {
        // Randomized response on one bit with eps = 1.
        let eps = 1.0f64;
        let keep = eps.exp() / (1.0 + eps.exp());
        let mut rng = RngStream::new(11);
        let flip = move |bit: f64, rng: &mut RngStream| {
            if rng.gen::<f64>() < keep {
                bit
            } else {
                1.0 - bit
            }
        };
        let report = empirical_epsilon_audit(
            "randomized response",
            eps,
            0.0,
            move |rng| Ok(flip(0.0, rng)),
            move |rng| Ok(flip(1.0, rng)),
            &EventFamily::FixedThresholds(vec![0.5]),
            20_000,
            0.95,
            vec![],
            &mut rng,
        )
        .unwrap();
        assert!(
            report.eps_lower_bound <= eps,
            "audit bound {} exceeds true eps {eps}",
            report.eps_lower_bound
        );
        assert!(report.eps_lower_bound > 0.5, "bound {}", report.eps_lower_bound);
    }

    #[test]
    fn covariance_estimator_clamps_out_of_range_learners() {
        let mut rng = RngStream::new(12);
        let rows: Vec<DVector<f64>> = (0..100).map(|_| standard_normal_vector(2, &mut rng)).collect();
        let data = SampleMatrix::from_rows(&rows).unwrap();
        let config = EstimatorConfig {
            total_samples: 100,
            subsample: 5,
            rounds: 10,
            xi: 0.01,
        };
        let budget = PrivacyBudget::new(1.0, 1e-6).unwrap();
        let run = |scale: f64, rng: &mut RngStream| {
            covariance_estimator_pipeline(
                &config,
                |sub, _| Ok(Some(sub.row(0))),
                move |_| Ok(DMatrix::identity(2, 2) * scale),
                &data,
                budget,
                true,
                false,
                rng,
            )
            .unwrap()
        };
        let out = run(3.0, &mut rng);
        assert!(out.clamped_to_identity);
        assert_eq!(out.sigma, DMatrix::identity(2, 2));
        let out = run(1.7, &mut rng);
        assert!(!out.clamped_to_identity);
        assert!((out.sigma[(0, 0)] - 1.7).abs() < 1e-12);
        assert_eq!(out.non_private_components, vec!["learner".to_string()]);
        // Output always lies in the clamp range or is the identity.
        let min = min_eigenvalue(&out.sigma).unwrap();
        assert!(min >= 0.5 - 1e-9);
    }

    #[test]
    fn covariance_estimator_recovers_scaled_identity() {
        let mut rng = RngStream::new(13);
        let scale = 1.5f64;
        let n_total = 20_000;
        let rows: Vec<DVector<f64>> = (0..n_total)
            .map(|_| standard_normal_vector(3, &mut rng) * scale.sqrt())
            .collect();
        let data = SampleMatrix::from_rows(&rows).unwrap();
        let config = EstimatorConfig {
            total_samples: n_total,
            subsample: 50,
            rounds: 200,
            xi: 0.01,
        };
        let out = covariance_estimator_pipeline(
            &config,
            |sub, _| Ok(Some(sub.row(0))), // an honest draw from the distribution
            agnostic_centered_gaussian_learner,
            &data,
            PrivacyBudget::new(0.5, 1e-7).unwrap(),
            true,
            false,
            &mut rng,
        )
        .unwrap();
        let truth = DMatrix::identity(3, 3) * scale;
        let sigma_psd = crate::numerics::PsdMatrix::new(truth.clone()).unwrap();
        let err = crate::numerics::mahalanobis_norm(&(out.sigma.clone() - truth), &sigma_psd).unwrap();
        assert!(err <= 0.3, "relative covariance error {err}");
        assert!(!out.clamped_to_identity);
        // Composed budget should exceed the per-round one.
        assert!(out.composed_budget.eps > out.per_round_budget.eps);
    }

    #[test]
    fn agnostic_learner_examples() {
        // Repeated basis vector: the average outer product is the indicator.
        let rows: Vec<DVector<f64>> = (0..5).map(|_| DVector::from_vec(vec![1.0, 0.0])).collect();
        let m = agnostic_centered_gaussian_learner(&SampleMatrix::from_rows(&rows).unwrap()).unwrap();
        assert!((m[(0, 0)] - 1.0).abs() < 1e-15 && m[(1, 1)].abs() < 1e-15);

        let mut rng = RngStream::new(14);
        let rows: Vec<DVector<f64>> = (0..100_000).map(|_| standard_normal_vector(4, &mut rng)).collect();
        let m = agnostic_centered_gaussian_learner(&SampleMatrix::from_rows(&rows).unwrap()).unwrap();
        assert!((m - DMatrix::identity(4, 4)).norm() <= 0.05);

        let few = SampleMatrix::from_row_major(2, 3, &[1.0; 6]).unwrap();
        assert!(agnostic_centered_gaussian_learner(&few).is_err());
    }

    #[test]
    fn agnostic_learner_contamination_observation() {
        // 10% contamination; the deviation is recorded as an observation,
        // with no accuracy claim attached.
        let mut rng = RngStream::new(15);
        let rows: Vec<DVector<f64>> = (0..50_000)
            .map(|i| {
                if i % 10 == 0 {
                    standard_normal_vector(3, &mut rng) * 3.0
                } else {
                    standard_normal_vector(3, &mut rng)
                }
            })
            .collect();
        let m = agnostic_centered_gaussian_learner(&SampleMatrix::from_rows(&rows).unwrap()).unwrap();
        let err = crate::numerics::mahalanobis_norm(
            &(m - DMatrix::identity(3, 3)),
            &crate::numerics::PsdMatrix::identity(3),
        )
        .unwrap();
        println!("contaminated second-moment deviation (identity norm): {err:.4}");
        assert!(err.is_finite());
    }
}
