//! Fully unknown mean and covariance: a learner stage estimates rough
//! preconditioners, the eigenvalue-tested sampler runs on whitened rows,
//! and the draw is re-colored. The empirical learner stand-in is not
//! private, and the pipeline says so.
//!
//! Run with: cargo run --release --example unbounded_cov

use dpsample::data::SampleMatrix;
use dpsample::dist::GaussianVectorSampler;
use dpsample::gaussian::{bounded_cov_sampler, recalibrated_ptr_threshold, BoundedCovParams};
use dpsample::numerics::PsdMatrix;
use dpsample::reductions::{unbounded_cov_sampler, DpLearner, EmpiricalGaussianLearner};
use dpsample::{ConstantsProfile, PrivacyBudget, Result, RngStream};
use nalgebra::DVector;

fn main() -> Result<()> {
    let d = 3;
    let pair_count = 200;
    let budget = PrivacyBudget::new(1.0, 0.01)?;
    let learner = EmpiricalGaussianLearner;
    let mut rng = RngStream::new(41);

    let mu = DVector::from_vec(vec![12.0, -7.0, 30.0]);
    let sigma = PsdMatrix::from_diagonal(&[9.0, 0.5, 25.0])?;
    let gauss = GaussianVectorSampler::new(mu.clone(), &sigma)?;
    let learner_rows = learner.sample_complexity(d, 0.001, 0.05, budget.halved());
    let rows: Vec<DVector<f64>> = (0..(learner_rows + 1 + 3 * pair_count))
        .map(|_| gauss.draw(&mut rng))
        .collect();
    let data = SampleMatrix::from_rows(&rows)?;

    let out = unbounded_cov_sampler(
        &data,
        budget,
        0.1,
        &learner,
        |whitened, kappa, inner_budget, _, rng| {
            let params = BoundedCovParams {
                trunc_radius: 1e6,
                test_sensitivity: 1.0,
                mean_rows: pair_count,
                pair_count,
                condition_bound: kappa,
                mean_bound: 1.0,
                dim: d,
                threshold_factor: recalibrated_ptr_threshold(d, pair_count, 0.05, &ConstantsProfile::practical()),
            };
            let trimmed = whitened.slice_rows(0, params.total_rows())?;
            Ok(bounded_cov_sampler(&trimmed, &params, inner_budget, rng)?.value)
        },
        &mut rng,
    )?;

    println!("learner rows: {}", out.learner_rows);
    println!("estimated mean: {:?}", out.estimate_mean.as_slice());
    println!("true mean:      {:?}", mu.as_slice());
    match &out.value {
        Some(v) => println!("released sample: {:?}", v.as_slice()),
        None => println!("inner sampler aborted; the abort propagates unchanged"),
    }
    println!("non-private components: {:?}", out.non_private_components);
    Ok(())
}
