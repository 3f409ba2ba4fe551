//! Covariance estimation through repeated sampling: subsample n-of-N rows,
//! release one sample per round, fit a centered Gaussian to the releases,
//! clamp to the identity outside [I/2, 5I/2], and account the privacy cost
//! by subsampling amplification plus composition.
//!
//! Run with: cargo run --release --example covariance_estimator

use dpsample::data::SampleMatrix;
use dpsample::dist::standard_normal_vector;
use dpsample::numerics::{mahalanobis_norm, PsdMatrix};
use dpsample::privacy::{agnostic_centered_gaussian_learner, covariance_estimator_pipeline, EstimatorConfig};
use dpsample::{PrivacyBudget, Result, RngStream};
use nalgebra::{DMatrix, DVector};

fn main() -> Result<()> {
    let d = 3;
    let scale = 1.5f64;
    let total = 20_000;
    let mut rng = RngStream::new(17);
    let rows: Vec<DVector<f64>> = (0..total)
        .map(|_| standard_normal_vector(d, &mut rng) * scale.sqrt())
        .collect();
    let data = SampleMatrix::from_rows(&rows)?;

    let config = EstimatorConfig {
        total_samples: total,
        subsample: 50,
        rounds: 200,
        xi: 0.01,
    };
    let out = covariance_estimator_pipeline(
        &config,
        // An honest sampler: release one true draw from each subsample.
        |subsample, _| Ok(Some(subsample.row(0))),
        agnostic_centered_gaussian_learner,
        &data,
        PrivacyBudget::new(0.5, 1e-7)?,
        true,
        false, // the stand-in learner is not private
        &mut rng,
    )?;

    let truth = DMatrix::identity(d, d) * scale;
    let err = mahalanobis_norm(&(out.sigma.clone() - &truth), &PsdMatrix::new(truth)?)?;
    println!("estimate:\n{:.4}", out.sigma);
    println!("relative error |est - truth|_Sigma = {err:.4}");
    println!("clamped to identity: {}", out.clamped_to_identity);
    println!(
        "per-round budget after amplification: ({:.5}, {:.2e})",
        out.per_round_budget.eps, out.per_round_budget.delta
    );
    println!(
        "composed over {} rounds: ({:.4}, {:.2e})",
        config.rounds, out.composed_budget.eps, out.composed_budget.delta
    );
    println!("non-private components: {:?}", out.non_private_components);
    Ok(())
}
