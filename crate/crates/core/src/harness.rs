//! Experiment harness: dataset ingestion, synthetic generators, experiment
//! execution with machine-readable reports, and the audit suite. This is
//! the layer the `dpsample` binary is a thin wrapper around.
//!
//! Reports are JSON with a fixed field order; a fixed seed reproduces a
//! byte-identical report apart from the wall-time field.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::data::{BitMatrix, SampleMatrix};
use crate::dist::GaussianVectorSampler;
use crate::error::{invalid_input, Error, Result};
use crate::gaussian::{
    bounded_cov_sampler, derive_bounded_cov_params, derive_known_cov_params,
    derive_simple_bounded_cov_params, noise_multiplier_check, simple_bounded_cov_sampler,
    spherical_gaussian_sampler, with_known_covariance, SamplerParams,
};
use crate::numerics::PsdMatrix;
use crate::privacy::{empirical_epsilon_audit, AuditReport, EventFamily, PrivacyBudget};
use crate::product::{
    derive_product_params, end_to_end_product_sampler, preconditioner, product_sampler,
    BernoulliSupplier, BitSupplier, MatrixSupplier,
};
use crate::profile::{ConstantsProfile, ScaleMode};
use crate::reductions::{unbounded_cov_sampler, DpLearner, EmpiricalGaussianLearner};
use crate::rng::RngStream;
use crate::stats::{empirical_tv, empirical_tv_standard_error, energy_two_sample_test, TwoSampleConfig};

/// Experiment families exposed by the harness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    GaussianKnownCov,
    GaussianBoundedCov,
    GaussianSimpleBoundedCov,
    GaussianUnboundedCov,
    Product,
}

impl Task {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "known-cov" | "gaussian_known_cov" => Ok(Self::GaussianKnownCov),
            "bounded-cov" | "gaussian_bounded_cov" => Ok(Self::GaussianBoundedCov),
            "simple-bounded-cov" | "gaussian_simple_bounded_cov" => Ok(Self::GaussianSimpleBoundedCov),
            "unbounded-cov" | "gaussian_unbounded_cov" => Ok(Self::GaussianUnboundedCov),
            "product" => Ok(Self::Product),
            other => Err(invalid_input(format!("unknown task: {other}"))),
        }
    }

    fn label(&self) -> &'static str {
        match self {
            Self::GaussianKnownCov => "gaussian_known_cov",
            Self::GaussianBoundedCov => "gaussian_bounded_cov",
            Self::GaussianSimpleBoundedCov => "gaussian_simple_bounded_cov",
            Self::GaussianUnboundedCov => "gaussian_unbounded_cov",
            Self::Product => "product",
        }
    }
}

/// Synthetic data description, the alternative to a dataset path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorSpec {
    Gaussian { mean: Vec<f64>, cov_diag: Vec<f64> },
    BernoulliProduct { probs: Vec<f64> },
}

impl GeneratorSpec {
    pub fn dim(&self) -> usize {
        match self {
            Self::Gaussian { mean, .. } => mean.len(),
            Self::BernoulliProduct { probs } => probs.len(),
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            Self::Gaussian { mean, cov_diag } => {
                if mean.is_empty() || mean.len() != cov_diag.len() {
                    return Err(invalid_input("generator mean and cov_diag must align"));
                }
                if mean.iter().any(|v| !v.is_finite())
                    || cov_diag.iter().any(|v| !v.is_finite() || *v < 0.0)
                {
                    return Err(invalid_input("generator parameters must be finite, variances nonnegative"));
                }
            }
            Self::BernoulliProduct { probs } => {
                if probs.is_empty() || probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
                    return Err(invalid_input("generator probabilities must lie in [0, 1]"));
                }
            }
        }
        Ok(())
    }
}

/// Exactly one of a dataset path or a synthetic generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    Csv(PathBuf),
    Synthetic(GeneratorSpec),
}

/// One experiment request.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub task: Task,
    pub budget: PrivacyBudget,
    pub alpha: f64,
    /// Covariance condition bound for the bounded tasks.
    pub kappa: f64,
    /// Mean-norm bound for the Gaussian tasks.
    pub mean_bound: f64,
    pub profile: ConstantsProfile,
    pub seed: u64,
    pub source: DataSource,
    /// Run the flip preprocessing stage of the product pipeline.
    #[serde(default)]
    pub product_flip_stage: bool,
}

impl ExperimentConfig {
    fn validate(&self) -> Result<()> {
        self.budget.validate()?;
        self.profile.validate()?;
        if !(self.alpha > 0.0 && self.alpha <= 0.5) {
            return Err(invalid_input(format!(
                "alpha must lie in (0, 1/2], got {}",
                self.alpha
            )));
        }
        if let DataSource::Synthetic(spec) = &self.source {
            spec.validate()?;
            match (self.task, spec) {
                (Task::Product, GeneratorSpec::BernoulliProduct { .. }) => {}
                (Task::Product, _) => {
                    return Err(invalid_input("product task needs a bernoulli_product generator"))
                }
                (_, GeneratorSpec::Gaussian { .. }) => {}
                (_, _) => return Err(invalid_input("gaussian tasks need a gaussian generator")),
            }
        }
        Ok(())
    }
}

/// One derived parameter with the expression that produced it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DerivedParameter {
    pub name: String,
    pub value: f64,
    pub formula: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnalyticCheck {
    pub name: String,
    pub passed: bool,
}

/// The released value, or the abort marker of the tested samplers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum OutcomeReport {
    Vector(Vec<f64>),
    Bits(Vec<u8>),
    Bottom,
}

/// Echo of the configuration that produced a report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub task: String,
    pub eps: f64,
    pub delta: f64,
    pub alpha: f64,
    pub kappa: f64,
    pub mean_bound: f64,
    pub scale_mode: ScaleMode,
    pub beta_tail_c: f64,
    pub concentration_c: f64,
    pub seed: u64,
    pub source: String,
}

/// Machine-readable record of one experiment run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub config: ConfigEcho,
    pub derived_parameters: Vec<DerivedParameter>,
    pub checks: Vec<AnalyticCheck>,
    pub outcome: OutcomeReport,
    pub non_private_components: Vec<String>,
    pub wall_time_ms: f64,
}

impl RunReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn all_checks_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

fn source_label(source: &DataSource) -> String {
    match source {
        DataSource::Csv(path) => format!("csv:{}", path.display()),
        DataSource::Synthetic(GeneratorSpec::Gaussian { mean, cov_diag }) => {
            format!("synthetic:gaussian(d={}, cov_diag={cov_diag:?})", mean.len())
        }
        DataSource::Synthetic(GeneratorSpec::BernoulliProduct { probs }) => {
            format!("synthetic:bernoulli(probs={probs:?})")
        }
    }
}

// ---------------------------------------------------------------------------
// Ingestion and generation
// ---------------------------------------------------------------------------

fn parse_csv_rows(path: &Path) -> Result<Vec<(usize, Vec<String>)>> {
    let text = std::fs::read_to_string(path)?;
    let mut rows = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        rows.push((idx + 1, line.split(',').map(|f| f.trim().to_string()).collect()));
    }
    if rows.is_empty() {
        return Err(invalid_input(format!("{} holds no data rows", path.display())));
    }
    Ok(rows)
}

/// Parses a CSV of finite reals, one record per line.
pub fn ingest_real_csv(path: &Path) -> Result<SampleMatrix> {
    let rows = parse_csv_rows(path)?;
    let width = rows[0].1.len();
    let mut values = Vec::with_capacity(rows.len() * width);
    for (line, fields) in &rows {
        if fields.len() != width {
            return Err(Error::Parse {
                line: *line,
                message: format!("expected {} fields, found {}", width, fields.len()),
            });
        }
        for field in fields {
            let v: f64 = field.parse().map_err(|_| Error::Parse {
                line: *line,
                message: format!("not a number: {field:?}"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    line: *line,
                    message: format!("non-finite value: {field:?}"),
                });
            }
            values.push(v);
        }
    }
    SampleMatrix::from_row_major(rows.len(), width, &values)
}

/// Parses a CSV of 0/1 integers, one record per line.
pub fn ingest_bit_csv(path: &Path) -> Result<BitMatrix> {
    let rows = parse_csv_rows(path)?;
    let width = rows[0].1.len();
    let mut bits = Vec::with_capacity(rows.len() * width);
    for (line, fields) in &rows {
        if fields.len() != width {
            return Err(Error::Parse {
                line: *line,
                message: format!("expected {} fields, found {}", width, fields.len()),
            });
        }
        for field in fields {
            match field.as_str() {
                "0" => bits.push(0u8),
                "1" => bits.push(1u8),
                other => {
                    return Err(Error::Parse {
                        line: *line,
                        message: format!("not a bit: {other:?}"),
                    })
                }
            }
        }
    }
    BitMatrix::from_row_major(rows.len(), width, &bits)
}

/// Draws `n` rows from `N(mean, diag(cov_diag))`.
pub fn generate_gaussian(
    n: usize,
    mean: &[f64],
    cov_diag: &[f64],
    rng: &mut RngStream,
) -> Result<SampleMatrix> {
    let cov = PsdMatrix::from_diagonal(cov_diag)?;
    let sampler = GaussianVectorSampler::new(DVector::from_row_slice(mean), &cov)?;
    let rows: Vec<DVector<f64>> = (0..n).map(|_| sampler.draw(rng)).collect();
    SampleMatrix::from_rows(&rows)
}

/// Draws `n` rows from the product of the given Bernoulli marginals.
pub fn generate_bernoulli(n: usize, probs: &[f64], rng: &mut RngStream) -> Result<BitMatrix> {
    BernoulliSupplier::new(probs.to_vec(), rng.clone())?.draw(n)
}

/// Writes a sample matrix as CSV.
pub fn write_real_csv(path: &Path, data: &SampleMatrix) -> Result<()> {
    let mut out = String::new();
    for i in 0..data.n_rows() {
        let row = data.row(i);
        for j in 0..data.dim() {
            if j > 0 {
                out.push(',');
            }
            let _ = write!(out, "{}", row[j]);
        }
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Writes a bit matrix as CSV.
pub fn write_bit_csv(path: &Path, data: &BitMatrix) -> Result<()> {
    let mut out = String::new();
    for i in 0..data.n_rows() {
        for (j, bit) in data.row(i).iter().enumerate() {
            if j > 0 {
                out.push(',');
            }
            let _ = write!(out, "{bit}");
        }
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Experiment execution
// ---------------------------------------------------------------------------

fn gaussian_rows(
    config: &ExperimentConfig,
    needed: usize,
    rng: &mut RngStream,
) -> Result<(SampleMatrix, Option<Vec<f64>>)> {
    match &config.source {
        DataSource::Synthetic(GeneratorSpec::Gaussian { mean, cov_diag }) => Ok((
            generate_gaussian(needed, mean, cov_diag, rng)?,
            Some(cov_diag.clone()),
        )),
        DataSource::Synthetic(_) => Err(invalid_input("gaussian task needs a gaussian generator")),
        DataSource::Csv(path) => {
            let all = ingest_real_csv(path)?;
            if all.n_rows() < needed {
                return Err(invalid_input(format!(
                    "dataset has {} rows, the derived parameters need {needed}",
                    all.n_rows()
                )));
            }
            Ok((all.slice_rows(0, needed)?, None))
        }
    }
}

fn param(name: &str, value: f64, formula: &str) -> DerivedParameter {
    DerivedParameter {
        name: name.to_string(),
        value,
        formula: formula.to_string(),
    }
}

/// Derives parameters, obtains data, runs the configured sampler, and
/// returns the report. Randomness is fully determined by the config seed.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunReport> {
    config.validate()?;
    let started = Instant::now();
    let root = RngStream::new(config.seed);
    let mut data_rng = root.substream(0);
    let mut mech_rng = root.substream(1);

    let mut derived = Vec::new();
    let mut checks = Vec::new();
    let mut non_private = Vec::new();

    let outcome = match config.task {
        Task::GaussianKnownCov => {
            let d = source_dim(config)?;
            let params =
                derive_known_cov_params(d, config.mean_bound, config.budget, config.alpha, &config.profile)?;
            derived.extend(known_cov_param_block(&params));
            checks.push(AnalyticCheck {
                name: "noise_multiplier".into(),
                passed: noise_multiplier_check(
                    SamplerParams::KnownCov(&params),
                    config.budget,
                    &config.profile,
                ),
            });
            let (data, cov_diag) = gaussian_rows(config, params.rows, &mut data_rng)?;
            let value = match cov_diag {
                Some(diag) if diag.iter().any(|v| (v - 1.0).abs() > 1e-12) => {
                    let sigma = PsdMatrix::from_diagonal(&diag)?;
                    with_known_covariance(&data, &sigma, &params, &mut mech_rng)?
                }
                _ => spherical_gaussian_sampler(&data, &params, &mut mech_rng)?,
            };
            OutcomeReport::Vector(value.iter().copied().collect())
        }
        Task::GaussianBoundedCov => {
            let d = source_dim(config)?;
            let params = derive_bounded_cov_params(
                d,
                config.mean_bound,
                config.kappa,
                config.budget,
                config.alpha,
                &config.profile,
            )?;
            derived.extend(bounded_cov_param_block(&params));
            checks.push(AnalyticCheck {
                name: "noise_multiplier".into(),
                passed: noise_multiplier_check(
                    SamplerParams::BoundedCov(&params),
                    config.budget,
                    &config.profile,
                ),
            });
            let (data, _) = gaussian_rows(config, params.total_rows(), &mut data_rng)?;
            let run = bounded_cov_sampler(&data, &params, config.budget, &mut mech_rng)?;
            checks.push(AnalyticCheck {
                name: "ptr_soundness".into(),
                passed: run.test_noise <= 0.0
                    && (run.value.is_none() || run.gram_min_eigenvalue >= run.threshold),
            });
            match run.value {
                Some(v) => OutcomeReport::Vector(v.iter().copied().collect()),
                None => OutcomeReport::Bottom,
            }
        }
        Task::GaussianSimpleBoundedCov => {
            let d = source_dim(config)?;
            let params = derive_simple_bounded_cov_params(
                d,
                config.mean_bound,
                config.kappa,
                config.budget,
                config.alpha,
                &config.profile,
            )?;
            derived.extend(simple_bounded_param_block(&params));
            checks.push(AnalyticCheck {
                name: "noise_multiplier".into(),
                passed: noise_multiplier_check(
                    SamplerParams::SimpleBoundedCov(&params),
                    config.budget,
                    &config.profile,
                ),
            });
            let (data, _) = gaussian_rows(config, params.total_rows(), &mut data_rng)?;
            let value = simple_bounded_cov_sampler(&data, &params, &mut mech_rng)?;
            OutcomeReport::Vector(value.iter().copied().collect())
        }
        Task::GaussianUnboundedCov => {
            let d = source_dim(config)?;
            let learner = EmpiricalGaussianLearner;
            let half = config.budget.halved();
            let inner = derive_bounded_cov_params(
                d,
                1.0,
                crate::reductions::UNBOUNDED_INNER_CONDITION_BOUND,
                half,
                config.alpha / 2.0,
                &config.profile,
            )?;
            let learner_rows = learner.sample_complexity(
                d,
                crate::reductions::LEARNER_ACCURACY,
                config.alpha / 2.0,
                half,
            );
            derived.push(param("learner_rows", learner_rows as f64, "learner sample complexity"));
            derived.push(param(
                "sampler_rows",
                inner.total_rows() as f64,
                "mean_rows + 2 * pair_count of the whitened stage",
            ));
            derived.push(param(
                "ptr_threshold",
                inner.threshold_factor * inner.pair_count as f64,
                "threshold_factor * pair_count",
            ));
            checks.push(AnalyticCheck {
                name: "noise_multiplier".into(),
                passed: noise_multiplier_check(SamplerParams::BoundedCov(&inner), half, &config.profile),
            });
            let needed = learner_rows + inner.total_rows() + 1;
            let (data, _) = gaussian_rows(config, needed, &mut data_rng)?;
            let run = unbounded_cov_sampler(
                &data,
                config.budget,
                config.alpha,
                &learner,
                |transformed, _, inner_budget, _, rng| {
                    let trimmed = transformed.slice_rows(0, inner.total_rows())?;
                    Ok(bounded_cov_sampler(&trimmed, &inner, inner_budget, rng)?.value)
                },
                &mut mech_rng,
            )?;
            non_private.extend(run.non_private_components.clone());
            match run.value {
                Some(v) => OutcomeReport::Vector(v.iter().copied().collect()),
                None => OutcomeReport::Bottom,
            }
        }
        Task::Product => {
            let (bits, draw, trace_rounds) = run_product_task(config, &mut data_rng, &mut mech_rng)?;
            derived.extend(product_param_block(&draw.params, &trace_rounds));
            for (j, (p, w)) in draw.clipped_probs.iter().zip(&draw.weights).enumerate() {
                derived.push(DerivedParameter {
                    name: format!("clipped_prob_{j}"),
                    value: *p,
                    formula: format!("clip(q_{j}, 1/(8 * {w}), 7/(8 * {w}))"),
                });
            }
            let contained = draw
                .clipped_probs
                .iter()
                .zip(&draw.weights)
                .all(|(p, w)| *p >= 1.0 / (8.0 * w) - 1e-15 && *p <= 7.0 / (8.0 * w) + 1e-15);
            checks.push(AnalyticCheck {
                name: "clip_containment".into(),
                passed: contained,
            });
            OutcomeReport::Bits(bits)
        }
    };

    Ok(RunReport {
        config: ConfigEcho {
            task: config.task.label().to_string(),
            eps: config.budget.eps,
            delta: config.budget.delta,
            alpha: config.alpha,
            kappa: config.kappa,
            mean_bound: config.mean_bound,
            scale_mode: config.profile.scale_mode,
            beta_tail_c: config.profile.beta_tail_c,
            concentration_c: config.profile.concentration_c,
            seed: config.seed,
            source: source_label(&config.source),
        },
        derived_parameters: derived,
        checks,
        outcome,
        non_private_components: non_private,
        wall_time_ms: started.elapsed().as_secs_f64() * 1e3,
    })
}

fn known_cov_param_block(params: &crate::gaussian::KnownCovParams) -> Vec<DerivedParameter> {
    vec![
        param(
            "trunc_radius",
            params.trunc_radius,
            "R + k_B * C * sqrt(d + ln(2 ln(2/delta) / (alpha eps)))",
        ),
        param(
            "rows",
            params.rows as f64,
            "1 + ceil(k_n * B * sqrt(ln(2/delta)) / eps)",
        ),
        param("noise_sigma", params.noise_sigma, "sqrt((n - 1) / n)"),
    ]
}

fn bounded_cov_param_block(params: &crate::gaussian::BoundedCovParams) -> Vec<DerivedParameter> {
    vec![
        param(
            "trunc_radius",
            params.trunc_radius,
            "R + k_B * kappa * sqrt(d + ln(2 ln(2/delta) / (alpha eps)))",
        ),
        param("test_sensitivity", params.test_sensitivity, "2 B^2"),
        param(
            "mean_rows",
            params.mean_rows as f64,
            "ceil(k_n * C^2 * B^2 * ln(10/delta) / (c eps)), floored at 2d",
        ),
        param("pair_count", params.pair_count as f64, "equal to mean_rows"),
        param(
            "ptr_threshold",
            params.threshold_factor * params.pair_count as f64,
            "threshold_factor * pair_count",
        ),
    ]
}

fn simple_bounded_param_block(
    params: &crate::gaussian::SimpleBoundedCovParams,
) -> Vec<DerivedParameter> {
    vec![
        param(
            "trunc_radius",
            params.trunc_radius,
            "R + k_B * kappa * sqrt(d (ln(2d/(alpha eps)) + ln ln(2/delta)))",
        ),
        param("noise_sigma", params.noise_sigma, "sqrt(alpha) / (2 d^{1/4})"),
        param(
            "mean_rows",
            params.mean_rows as f64,
            "ceil(k_n * B^2 * ln(2/delta) / (sigma^2 eps^2))",
        ),
    ]
}

fn product_param_block(
    params: &crate::product::ProductParams,
    rounds: &[crate::product::PreconditionerRound],
) -> Vec<DerivedParameter> {
    let mut out = vec![
        param("trunc_bound", params.trunc_bound, "k * (d/alpha) * ln(d/alpha)"),
        param("rows", params.rows as f64, "ceil(r * B / eps)"),
    ];
    for round in rounds {
        out.push(param(
            &format!("round{}_trunc_bound", round.level),
            round.trunc_bound,
            "k * (d 2^{-l} + 1)",
        ));
        out.push(param(
            &format!("round{}_rows", round.level),
            round.rows as f64,
            "ceil((k_n/eps) * B_l * 2^l * ln(d/(alpha beta)))",
        ));
    }
    out
}

/// Derives every parameter an experiment would run with, without touching
/// data or randomness. Backs the `params` subcommand.
pub fn derive_parameters(config: &ExperimentConfig) -> Result<(Vec<DerivedParameter>, Vec<AnalyticCheck>)> {
    config.validate()?;
    let d = source_dim(config)?;
    let mut derived = Vec::new();
    let mut checks = Vec::new();
    match config.task {
        Task::GaussianKnownCov => {
            let params = derive_known_cov_params(
                d,
                config.mean_bound,
                config.budget,
                config.alpha,
                &config.profile,
            )?;
            derived.extend(known_cov_param_block(&params));
            checks.push(AnalyticCheck {
                name: "noise_multiplier".into(),
                passed: noise_multiplier_check(
                    SamplerParams::KnownCov(&params),
                    config.budget,
                    &config.profile,
                ),
            });
        }
        Task::GaussianBoundedCov => {
            let params = derive_bounded_cov_params(
                d,
                config.mean_bound,
                config.kappa,
                config.budget,
                config.alpha,
                &config.profile,
            )?;
            derived.extend(bounded_cov_param_block(&params));
            checks.push(AnalyticCheck {
                name: "noise_multiplier".into(),
                passed: noise_multiplier_check(
                    SamplerParams::BoundedCov(&params),
                    config.budget,
                    &config.profile,
                ),
            });
        }
        Task::GaussianSimpleBoundedCov => {
            let params = derive_simple_bounded_cov_params(
                d,
                config.mean_bound,
                config.kappa,
                config.budget,
                config.alpha,
                &config.profile,
            )?;
            derived.extend(simple_bounded_param_block(&params));
            checks.push(AnalyticCheck {
                name: "noise_multiplier".into(),
                passed: noise_multiplier_check(
                    SamplerParams::SimpleBoundedCov(&params),
                    config.budget,
                    &config.profile,
                ),
            });
        }
        Task::GaussianUnboundedCov => {
            let half = config.budget.halved();
            let inner = derive_bounded_cov_params(
                d,
                1.0,
                crate::reductions::UNBOUNDED_INNER_CONDITION_BOUND,
                half,
                config.alpha / 2.0,
                &config.profile,
            )?;
            let learner_rows = EmpiricalGaussianLearner.sample_complexity(
                d,
                crate::reductions::LEARNER_ACCURACY,
                config.alpha / 2.0,
                half,
            );
            derived.push(param("learner_rows", learner_rows as f64, "learner sample complexity"));
            derived.extend(bounded_cov_param_block(&inner));
            checks.push(AnalyticCheck {
                name: "noise_multiplier".into(),
                passed: noise_multiplier_check(SamplerParams::BoundedCov(&inner), half, &config.profile),
            });
        }
        Task::Product => {
            let stages = if config.product_flip_stage { 3.0 } else { 2.0 };
            let stage_eps = config.budget.eps / stages;
            let inner_alpha = config.alpha / 2.0;
            let beta = config.alpha / (24.0 * d as f64);
            let params = derive_product_params(d, stage_eps, inner_alpha, &config.profile)?;
            let schedule = crate::product::preconditioner_schedule(
                d,
                stage_eps,
                inner_alpha,
                beta,
                &config.profile,
            )?;
            derived.extend(product_param_block(&params, &schedule));
        }
    }
    Ok((derived, checks))
}

fn source_dim(config: &ExperimentConfig) -> Result<usize> {
    match &config.source {
        DataSource::Synthetic(spec) => Ok(spec.dim()),
        DataSource::Csv(path) => match config.task {
            Task::Product => Ok(ingest_bit_csv(path)?.dim()),
            _ => Ok(ingest_real_csv(path)?.dim()),
        },
    }
}

type ProductRun = (Vec<u8>, crate::product::ProductDraw, Vec<crate::product::PreconditionerRound>);

fn run_product_task(
    config: &ExperimentConfig,
    data_rng: &mut RngStream,
    mech_rng: &mut RngStream,
) -> Result<ProductRun> {
    let eps = config.budget.eps;
    match &config.source {
        DataSource::Synthetic(GeneratorSpec::BernoulliProduct { probs }) => {
            let mut supplier = BernoulliSupplier::new(probs.clone(), data_rng.clone())?;
            run_product_stages(config, &mut supplier, eps, mech_rng)
        }
        DataSource::Synthetic(_) => Err(invalid_input("product task needs a bernoulli_product generator")),
        DataSource::Csv(path) => {
            let data = ingest_bit_csv(path)?;
            let mut supplier = MatrixSupplier::new(&data);
            run_product_stages(config, &mut supplier, eps, mech_rng)
        }
    }
}

fn run_product_stages<S: BitSupplier>(
    config: &ExperimentConfig,
    supplier: &mut S,
    eps: f64,
    rng: &mut RngStream,
) -> Result<ProductRun> {
    if config.product_flip_stage {
        let out = end_to_end_product_sampler(supplier, eps, config.alpha, &config.profile, rng)?;
        Ok((out.bits, out.sampler_draw, out.preconditioner.rounds))
    } else {
        // Two stages at eps/2 each; marginals above 3/4 are caught by the
        // clip bound instead of а flip.
        let d = supplier.dim();
        let stage_eps = eps / 2.0;
        let inner_alpha = config.alpha / 2.0;
        let beta = config.alpha / (24.0 * d as f64);
        let trace = preconditioner(supplier, stage_eps, inner_alpha, beta, &config.profile, rng)?;
        let params = derive_product_params(d, stage_eps, inner_alpha, &config.profile)?;
        let rows = supplier.draw(params.rows)?;
        let draw = product_sampler(&rows, &trace.assignment, stage_eps, inner_alpha, &config.profile, rng)?;
        Ok((draw.bits.clone(), draw, trace.rounds))
    }
}

// ---------------------------------------------------------------------------
// Audit suite
// ---------------------------------------------------------------------------

/// Mechanisms the audit suite knows how to wire to a neighbor pair.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuditTarget {
    /// The known-covariance Gaussian sampler at derived parameters, on an
    /// all-zeros dataset vs one row pushed to the truncation radius.
    KnownCovGaussian { d: usize },
    /// The product sampler at derived parameters, on all-zeros vs one
    /// all-ones row.
    ProductSampler { d: usize },
    /// A deliberately broken mechanism that releases the differing record
    /// verbatim while claiming the declared budget. Exists to prove the
    /// audit has teeth.
    LeakyMock,
}

/// One audit request.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AuditSuiteEntry {
    pub label: String,
    pub target: AuditTarget,
    pub budget: PrivacyBudget,
    pub alpha: f64,
}

/// Result of one audit plus its consistency verdicts.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AuditOutcome {
    pub report: AuditReport,
    /// Lower bound does not exceed the declared epsilon.
    pub consistent: bool,
    /// Result of the per-target distributional check, when one is defined.
    pub distribution_ok: Option<bool>,
}

/// Aggregated audit artifact.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AuditSuiteReport {
    pub outcomes: Vec<AuditOutcome>,
    pub all_consistent: bool,
    pub trials: usize,
    pub confidence: f64,
    pub seed: u64,
}

impl AuditSuiteReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Runs the audit and distributional checks for every entry. An empty entry
/// list yields an empty, consistent report.
pub fn run_audit_suite(
    entries: &[AuditSuiteEntry],
    trials: usize,
    profile: &ConstantsProfile,
    seed: u64,
) -> Result<AuditSuiteReport> {
    let root = RngStream::new(seed);
    let mut outcomes = Vec::with_capacity(entries.len());
    for (idx, entry) in entries.iter().enumerate() {
        let mut rng = root.substream(idx as u64);
        let outcome = match &entry.target {
            AuditTarget::KnownCovGaussian { d } => {
                audit_known_cov(entry, *d, trials, profile, &mut rng)?
            }
            AuditTarget::ProductSampler { d } => {
                audit_product(entry, *d, trials, profile, &mut rng)?
            }
            AuditTarget::LeakyMock => audit_leaky(entry, trials, &mut rng)?,
        };
        outcomes.push(outcome);
    }
    let all_consistent = outcomes
        .iter()
        .all(|o| o.consistent && o.distribution_ok.unwrap_or(true));
    Ok(AuditSuiteReport {
        outcomes,
        all_consistent,
        trials,
        confidence: 0.95,
        seed,
    })
}

fn audit_known_cov(
    entry: &AuditSuiteEntry,
    d: usize,
    trials: usize,
    profile: &ConstantsProfile,
    rng: &mut RngStream,
) -> Result<AuditOutcome> {
    let params = derive_known_cov_params(d, 0.0, entry.budget, entry.alpha, profile)?;
    let zeros = SampleMatrix::from_row_major(params.rows, d, &vec![0.0; params.rows * d])?;
    let mut hot = vec![0.0; params.rows * d];
    hot[0] = params.trunc_radius; // worst-case single-row substitution
    let hot = SampleMatrix::from_row_major(params.rows, d, &hot)?;

    let report = empirical_epsilon_audit(
        &entry.label,
        entry.budget.eps,
        entry.budget.delta,
        |rng| Ok(spherical_gaussian_sampler(&zeros, &params, rng)?[0]),
        |rng| Ok(spherical_gaussian_sampler(&hot, &params, rng)?[0]),
        &EventFamily::HalfSpaceThresholds { count: 15 },
        trials,
        0.95,
        vec![],
        rng,
    )?;

    // Distributional check: on the all-zeros dataset the output is exactly
    // N(0, sigma^2 I).
    let m = 600;
    let ours: Vec<DVector<f64>> = (0..m)
        .map(|_| spherical_gaussian_sampler(&zeros, &params, rng))
        .collect::<Result<_>>()?;
    let sigma = PsdMatrix::from_diagonal(&vec![params.noise_sigma.powi(2); d])?;
    let gauss = GaussianVectorSampler::new(DVector::zeros(d), &sigma)?;
    let direct: Vec<DVector<f64>> = (0..m).map(|_| gauss.draw(rng)).collect();
    let test = energy_two_sample_test(
        &ours,
        &direct,
        &TwoSampleConfig {
            max_points_per_side: 600,
            permutations: 99,
            ..Default::default()
        },
        rng,
    )?;

    let consistent = report.eps_lower_bound <= entry.budget.eps;
    Ok(AuditOutcome {
        report,
        consistent,
        distribution_ok: Some(!test.reject),
    })
}

fn audit_product(
    entry: &AuditSuiteEntry,
    d: usize,
    trials: usize,
    profile: &ConstantsProfile,
    rng: &mut RngStream,
) -> Result<AuditOutcome> {
    let params = derive_product_params(d, entry.budget.eps, entry.alpha, profile)?;
    let max_level = crate::product::bucket_count(d, entry.alpha)?;
    let buckets = crate::product::BucketAssignment::new(vec![0; d], max_level)?;
    let zeros = BitMatrix::from_row_major(params.rows, d, &vec![0u8; params.rows * d])?;
    let mut hot_bits = vec![0u8; params.rows * d];
    hot_bits[..d].fill(1);
    let hot = BitMatrix::from_row_major(params.rows, d, &hot_bits)?;

    let sum_bits = |draw: &crate::product::ProductDraw| -> f64 {
        draw.bits.iter().map(|&b| f64::from(b)).sum()
    };
    let report = empirical_epsilon_audit(
        &entry.label,
        entry.budget.eps,
        0.0,
        |rng| {
            Ok(sum_bits(&product_sampler(&zeros, &buckets, entry.budget.eps, entry.alpha, profile, rng)?))
        },
        |rng| {
            Ok(sum_bits(&product_sampler(&hot, &buckets, entry.budget.eps, entry.alpha, profile, rng)?))
        },
        &EventFamily::FixedThresholds((0..d).map(|k| k as f64 + 0.5).collect()),
        trials,
        0.95,
        vec![],
        rng,
    )?;

    // Distributional check: counts of ones against the clipped marginals.
    let reference = product_sampler(&zeros, &buckets, entry.budget.eps, entry.alpha, profile, rng)?;
    let m = 4000usize;
    let mut count_ones = vec![0u64; d];
    for _ in 0..m {
        let draw = product_sampler(&zeros, &buckets, entry.budget.eps, entry.alpha, profile, rng)?;
        for (j, &b) in draw.bits.iter().enumerate() {
            count_ones[j] += u64::from(b);
        }
    }
    let mut dist_ok = true;
    for (ones, clipped) in count_ones.iter().zip(&reference.clipped_probs) {
        let tv = empirical_tv(&[*ones, m as u64 - ones], &[*clipped, 1.0 - clipped])?;
        let se = empirical_tv_standard_error(&[*ones, m as u64 - ones]);
        if tv > 4.0 * se + 0.01 {
            dist_ok = false;
        }
    }

    let consistent = report.eps_lower_bound <= entry.budget.eps;
    Ok(AuditOutcome {
        report,
        consistent,
        distribution_ok: Some(dist_ok),
    })
}

fn audit_leaky(entry: &AuditSuiteEntry, trials: usize, rng: &mut RngStream) -> Result<AuditOutcome> {
    let report = empirical_epsilon_audit(
        &entry.label,
        entry.budget.eps,
        entry.budget.delta,
        |_| Ok(0.0),
        |_| Ok(10.0),
        &EventFamily::HalfSpaceThresholds { count: 9 },
        trials,
        0.95,
        vec!["mechanism: releases one record verbatim".to_string()],
        rng,
    )?;
    let consistent = report.eps_lower_bound <= entry.budget.eps;
    Ok(AuditOutcome {
        report,
        consistent,
        distribution_ok: None,
    })
}
