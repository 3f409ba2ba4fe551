//! Thin command-line front end over [`dpsample::harness`].
//!
//! Exit codes: 0 on success, 2 when a tested sampler aborts, 1 on any error
//! or failed audit consistency check.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use dpsample::harness::{
    derive_parameters, generate_bernoulli, generate_gaussian, run_audit_suite, run_experiment,
    write_bit_csv, write_real_csv, AuditSuiteEntry, AuditTarget, DataSource, ExperimentConfig,
    GeneratorSpec, OutcomeReport, Task,
};
use dpsample::{ConstantsProfile, PrivacyBudget, Result, RngStream};

#[derive(Parser)]
#[command(name = "dpsample", about = "Differentially private one-shot sampling experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write its JSON report.
    Sample(ExperimentArgs),
    /// Print the derived parameters without running the sampler.
    Params(ExperimentArgs),
    /// Run the empirical privacy audit suite.
    Audit(AuditArgs),
    /// Generate a synthetic dataset as CSV.
    Gen(GenArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ProfileKind {
    Paper,
    Practical,
}

#[derive(Args)]
struct ExperimentArgs {
    /// Experiment family: known-cov | bounded-cov | simple-bounded-cov |
    /// unbounded-cov | product.
    #[arg(long)]
    task: String,
    #[arg(long, default_value_t = 1.0)]
    eps: f64,
    #[arg(long, default_value_t = 0.01)]
    delta: f64,
    #[arg(long, default_value_t = 0.1)]
    alpha: f64,
    /// Covariance condition bound for the bounded tasks.
    #[arg(long, default_value_t = 1.0)]
    kappa: f64,
    /// Mean-norm bound for the Gaussian tasks.
    #[arg(long = "R", default_value_t = 0.0)]
    mean_bound: f64,
    #[arg(long, value_enum, default_value_t = ProfileKind::Practical)]
    profile: ProfileKind,
    /// Beta-tail constant c; required with --profile paper.
    #[arg(long)]
    constant_c: Option<f64>,
    /// Concentration constant C; required with --profile paper.
    #[arg(long)]
    constant_big_c: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Dataset CSV; omit to use the synthetic generator flags.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Synthetic Gaussian mean, comma separated.
    #[arg(long, value_delimiter = ',')]
    gen_mean: Vec<f64>,
    /// Synthetic Gaussian covariance diagonal, comma separated.
    #[arg(long, value_delimiter = ',')]
    gen_cov_diag: Vec<f64>,
    /// Synthetic product-distribution marginals, comma separated.
    #[arg(long, value_delimiter = ',')]
    gen_probs: Vec<f64>,
    /// Enable the flip preprocessing stage of the product pipeline.
    #[arg(long)]
    flip: bool,
    /// Report output path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AuditArgs {
    #[arg(long, default_value_t = 10_000)]
    trials: usize,
    #[arg(long, default_value_t = 1.0)]
    eps: f64,
    #[arg(long, default_value_t = 0.01)]
    delta: f64,
    #[arg(long, default_value_t = 0.1)]
    alpha: f64,
    /// Dimension of the audited mechanisms.
    #[arg(long, default_value_t = 2)]
    d: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Include the deliberately leaking mock mechanism (the suite then
    /// fails, demonstrating the audit floor).
    #[arg(long)]
    include_leaky_mock: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GenArgs {
    /// gaussian | product
    #[arg(long)]
    kind: String,
    #[arg(long)]
    n: usize,
    #[arg(long, value_delimiter = ',')]
    mean: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    cov_diag: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    probs: Vec<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

fn build_profile(args: &ExperimentArgs) -> Result<ConstantsProfile> {
    match args.profile {
        ProfileKind::Practical => Ok(ConstantsProfile::practical()),
        ProfileKind::Paper => match (args.constant_c, args.constant_big_c) {
            (Some(c), Some(big_c)) => ConstantsProfile::paper_faithful(c, big_c),
            _ => Err(dpsample::Error::InvalidInput(
                "--profile paper requires --constant-c and --constant-big-c; the analysis never fixes them".into(),
            )),
        },
    }
}

fn build_config(args: &ExperimentArgs) -> Result<ExperimentConfig> {
    let task = Task::parse(&args.task)?;
    let source = match (&args.data, task) {
        (Some(path), _) => DataSource::Csv(path.clone()),
        (None, Task::Product) => {
            if args.gen_probs.is_empty() {
                return Err(dpsample::Error::InvalidInput(
                    "provide --data or --gen-probs for the product task".into(),
                ));
            }
            DataSource::Synthetic(GeneratorSpec::BernoulliProduct {
                probs: args.gen_probs.clone(),
            })
        }
        (None, _) => {
            if args.gen_mean.is_empty() {
                return Err(dpsample::Error::InvalidInput(
                    "provide --data or --gen-mean/--gen-cov-diag for Gaussian tasks".into(),
                ));
            }
            let cov = if args.gen_cov_diag.is_empty() {
                vec![1.0; args.gen_mean.len()]
            } else {
                args.gen_cov_diag.clone()
            };
            DataSource::Synthetic(GeneratorSpec::Gaussian {
                mean: args.gen_mean.clone(),
                cov_diag: cov,
            })
        }
    };
    Ok(ExperimentConfig {
        task,
        budget: PrivacyBudget::new(args.eps, args.delta)?,
        alpha: args.alpha,
        kappa: args.kappa,
        mean_bound: args.mean_bound,
        profile: build_profile(args)?,
        seed: args.seed,
        source,
        product_flip_stage: args.flip,
    })
}

fn emit(text: &str, out: &Option<PathBuf>) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, text)?,
        None => println!("{text}"),
    }
    Ok(())
}

fn run(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::Sample(args) => {
            let config = build_config(&args)?;
            let report = run_experiment(&config)?;
            let bottom = report.outcome == OutcomeReport::Bottom;
            emit(&report.to_json()?, &args.out)?;
            Ok(if bottom { 2 } else { 0 })
        }
        Command::Params(args) => {
            let config = build_config(&args)?;
            let (derived, checks) = derive_parameters(&config)?;
            let doc = serde_json::json!({
                "task": args.task,
                "derived_parameters": derived,
                "checks": checks,
            });
            emit(&serde_json::to_string_pretty(&doc)?, &args.out)?;
            Ok(0)
        }
        Command::Audit(args) => {
            let budget = PrivacyBudget::new(args.eps, args.delta)?;
            let mut entries = vec![
                AuditSuiteEntry {
                    label: format!("known_cov d={}", args.d),
                    target: AuditTarget::KnownCovGaussian { d: args.d },
                    budget,
                    alpha: args.alpha,
                },
                AuditSuiteEntry {
                    label: format!("product d={}", args.d),
                    target: AuditTarget::ProductSampler { d: args.d },
                    budget: PrivacyBudget::new(args.eps, 0.0)?,
                    alpha: args.alpha.min(0.5),
                },
            ];
            if args.include_leaky_mock {
                entries.push(AuditSuiteEntry {
                    label: "leaky mock".into(),
                    target: AuditTarget::LeakyMock,
                    budget,
                    alpha: args.alpha,
                });
            }
            let report = run_audit_suite(&entries, args.trials, &ConstantsProfile::practical(), args.seed)?;
            let consistent = report.all_consistent;
            emit(&report.to_json()?, &args.out)?;
            Ok(if consistent { 0 } else { 1 })
        }
        Command::Gen(args) => {
            let mut rng = RngStream::new(args.seed);
            match args.kind.as_str() {
                "gaussian" => {
                    let cov = if args.cov_diag.is_empty() {
                        vec![1.0; args.mean.len()]
                    } else {
                        args.cov_diag.clone()
                    };
                    let data = generate_gaussian(args.n, &args.mean, &cov, &mut rng)?;
                    write_real_csv(&args.out, &data)?;
                }
                "product" => {
                    let data = generate_bernoulli(args.n, &args.probs, &mut rng)?;
                    write_bit_csv(&args.out, &data)?;
                }
                other => {
                    return Err(dpsample::Error::InvalidInput(format!(
                        "unknown generator kind: {other}"
                    )))
                }
            }
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(1)
        }
    }
}
