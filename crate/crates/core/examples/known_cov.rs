//! Known-covariance Gaussian sampling: derive parameters from the privacy
//! budget, draw the dataset, release one private sample.
//!
//! Run with: cargo run --release --example known_cov

use dpsample::data::SampleMatrix;
use dpsample::dist::GaussianVectorSampler;
use dpsample::gaussian::{
    derive_known_cov_params, noise_multiplier_check, spherical_gaussian_sampler, SamplerParams,
};
use dpsample::numerics::PsdMatrix;
use dpsample::{ConstantsProfile, PrivacyBudget, Result, RngStream};
use nalgebra::DVector;

fn main() -> Result<()> {
    let d = 4;
    let budget = PrivacyBudget::new(1.0, 0.01)?;
    let alpha = 0.1;
    let profile = ConstantsProfile::practical();
    let mut rng = RngStream::new(7);

    // Mean within a known norm bound; covariance is the identity.
    let mean = DVector::from_vec(vec![1.0, -0.5, 2.0, 0.0]);
    let params = derive_known_cov_params(d, mean.norm(), budget, alpha, &profile)?;
    println!(
        "derived: trunc radius {:.3}, rows {}, noise sigma {:.6}",
        params.trunc_radius, params.rows, params.noise_sigma
    );
    println!(
        "noise multiplier check: {}",
        noise_multiplier_check(SamplerParams::KnownCov(&params), budget, &profile)
    );

    let gauss = GaussianVectorSampler::new(mean.clone(), &PsdMatrix::identity(d))?;
    let rows: Vec<DVector<f64>> = (0..params.rows).map(|_| gauss.draw(&mut rng)).collect();
    let data = SampleMatrix::from_rows(&rows)?;

    let sample = spherical_gaussian_sampler(&data, &params, &mut rng)?;
    println!("released sample: {:?}", sample.as_slice());
    println!("true mean:       {:?}", mean.as_slice());
    Ok(())
}
