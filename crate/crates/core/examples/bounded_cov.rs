//! Bounded-covariance sampling with the noisy eigenvalue test: a benign run
//! that releases a sample, and an adversarial dataset that forces an abort.
//!
//! Run with: cargo run --release --example bounded_cov

use dpsample::data::SampleMatrix;
use dpsample::dist::GaussianVectorSampler;
use dpsample::gaussian::{
    bounded_cov_sampler, derive_bounded_cov_params, noise_multiplier_check, SamplerParams,
};
use dpsample::numerics::PsdMatrix;
use dpsample::{ConstantsProfile, PrivacyBudget, Result, RngStream};
use nalgebra::DVector;

fn main() -> Result<()> {
    let d = 4;
    let budget = PrivacyBudget::new(1.0, 0.01)?;
    let profile = ConstantsProfile::practical();
    let mut rng = RngStream::new(11);

    // Derived parameters keep the pair count large enough that the noisy
    // eigenvalue test passes on well-spread data despite its 2 B^2
    // sensitivity.
    let params = derive_bounded_cov_params(d, 1.0, 4.0, budget, 0.1, &profile)?;
    println!(
        "derived: trunc radius {:.2}, test sensitivity {:.0}, pairs {}, threshold {:.0}",
        params.trunc_radius,
        params.test_sensitivity,
        params.pair_count,
        params.threshold_factor * params.pair_count as f64
    );
    println!(
        "noise multiplier check: {}",
        noise_multiplier_check(SamplerParams::BoundedCov(&params), budget, &profile)
    );

    // Benign data: N(0, Sigma) with I <= Sigma <= 4 I.
    let sigma = PsdMatrix::from_diagonal(&[1.0, 2.0, 3.0, 4.0])?;
    let gauss = GaussianVectorSampler::new(DVector::zeros(d), &sigma)?;
    let rows: Vec<DVector<f64>> = (0..params.total_rows()).map(|_| gauss.draw(&mut rng)).collect();
    let out = bounded_cov_sampler(&SampleMatrix::from_rows(&rows)?, &params, budget, &mut rng)?;
    println!(
        "benign run: min eigenvalue {:.0} vs threshold {:.0}, test noise {:.0}",
        out.gram_min_eigenvalue, out.threshold, out.test_noise
    );
    match out.value {
        Some(v) => println!("  released: {:?}", v.as_slice()),
        None => println!("  aborted"),
    }

    // Adversarial data: all zeros except one row. The pair differences span
    // nothing, so the test must abort rather than reveal that row.
    let mut values = vec![0.0; params.total_rows() * d];
    values[0] = 42.0;
    let adversarial = SampleMatrix::from_row_major(params.total_rows(), d, &values)?;
    let out = bounded_cov_sampler(&adversarial, &params, budget, &mut rng)?;
    println!(
        "adversarial run: min eigenvalue {:.1} -> {}",
        out.gram_min_eigenvalue,
        if out.value.is_none() { "abort" } else { "released (unexpected)" }
    );
    Ok(())
}
