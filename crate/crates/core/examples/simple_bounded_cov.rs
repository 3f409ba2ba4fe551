//! The simpler bounded-covariance sampler: pair differences plus spherical
//! Gaussian noise, never aborting, at the cost of a worse accuracy rate.
//!
//! Run with: cargo run --release --example simple_bounded_cov

use dpsample::data::SampleMatrix;
use dpsample::dist::GaussianVectorSampler;
use dpsample::gaussian::{
    derive_simple_bounded_cov_params, noise_multiplier_check, simple_bounded_cov_sampler,
    SamplerParams,
};
use dpsample::numerics::PsdMatrix;
use dpsample::{ConstantsProfile, PrivacyBudget, Result, RngStream};
use nalgebra::DVector;

fn main() -> Result<()> {
    let d = 3;
    let budget = PrivacyBudget::new(1.0, 0.01)?;
    let alpha = 0.2;
    let profile = ConstantsProfile::practical();
    let mut rng = RngStream::new(23);

    let params = derive_simple_bounded_cov_params(d, 0.0, 2.0, budget, alpha, &profile)?;
    println!(
        "derived: trunc radius {:.2}, noise sigma {:.4}, rows {} + 2 x {}",
        params.trunc_radius, params.noise_sigma, params.mean_rows, params.pair_count
    );
    println!(
        "noise multiplier check: {}",
        noise_multiplier_check(SamplerParams::SimpleBoundedCov(&params), budget, &profile)
    );

    let sigma = PsdMatrix::from_diagonal(&[1.0, 1.5, 2.0])?;
    let gauss = GaussianVectorSampler::new(DVector::zeros(d), &sigma)?;
    let rows: Vec<DVector<f64>> = (0..params.total_rows()).map(|_| gauss.draw(&mut rng)).collect();
    let sample = simple_bounded_cov_sampler(&SampleMatrix::from_rows(&rows)?, &params, &mut rng)?;
    println!("released sample: {:?}", sample.as_slice());
    println!(
        "output law: N(0, Sigma + {:.4} I) when no row is truncated",
        params.noise_sigma.powi(2)
    );
    Ok(())
}
