//! Lifting a bounded-mean sampler to arbitrary means: a private densest-ball
//! search finds a rough center, the known-covariance sampler runs on
//! recentered rows, and the output is shifted back.
//!
//! Run with: cargo run --release --example bounded_mean

use dpsample::data::SampleMatrix;
use dpsample::dist::GaussianVectorSampler;
use dpsample::gaussian::{derive_known_cov_params, spherical_gaussian_sampler};
use dpsample::numerics::PsdMatrix;
use dpsample::reductions::bounded_mean_reduction;
use dpsample::{ConstantsProfile, PrivacyBudget, Result, RngStream};
use nalgebra::DVector;

fn main() -> Result<()> {
    let d = 4;
    let budget = PrivacyBudget::new(1.0, 0.01)?;
    let alpha = 0.1;
    let profile = ConstantsProfile::practical();
    let mut rng = RngStream::new(31);

    // A mean far outside any a-priori bound.
    let mean = DVector::from_vec(vec![250.0, -80.0, 1000.0, 3.0]);
    let gauss = GaussianVectorSampler::new(mean.clone(), &PsdMatrix::identity(d))?;
    let rows: Vec<DVector<f64>> = (0..6000).map(|_| gauss.draw(&mut rng)).collect();
    let data = SampleMatrix::from_rows(&rows)?;

    let inner_profile = profile.clone();
    let out = bounded_mean_reduction(
        &data,
        1.0,
        budget,
        alpha,
        &profile,
        move |shifted, mean_bound, inner_budget, inner_alpha, rng| {
            let params =
                derive_known_cov_params(d, mean_bound, inner_budget, inner_alpha, &inner_profile)?;
            let trimmed = shifted.slice_rows(0, params.rows)?;
            spherical_gaussian_sampler(&trimmed, &params, rng)
        },
        &mut rng,
    )?;

    println!("rough-mean rows: {}", out.rough_rows);
    println!("rough center:    {:?}", out.rough_center.as_slice());
    println!("true mean:       {:?}", mean.as_slice());
    println!("released sample: {:?}", out.value.as_slice());
    let total = out.budgets.total();
    for (stage, b) in &out.budgets.stages {
        println!("stage {stage}: eps {}, delta {}", b.eps, b.delta);
    }
    println!("declared total: eps {}, delta {}", total.eps, total.delta);
    Ok(())
}
