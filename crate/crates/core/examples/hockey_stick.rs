//! Estimating the hockey-stick divergence between two Gaussians by Monte
//! Carlo, with both the divergence itself and its probability-form upper
//! bound, against the closed form for the Gaussian pair.
//!
//! Run with: cargo run --release --example hockey_stick

use dpsample::privacy::hockey_stick_estimate;
use dpsample::{Result, RngStream};
use rand::Rng;
use statrs::distribution::{ContinuousCDF, Normal};

fn main() -> Result<()> {
    let shift = 1.0;
    let logpdf = |mean: f64| {
        move |x: &f64| -0.5 * (x - mean).powi(2) - 0.5 * (2.0 * std::f64::consts::PI).ln()
    };
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut rng = RngStream::new(3);

    println!("d_eps(N(0,1) || N({shift},1)) at 200k samples:");
    for eps in [0.0f64, 0.25, 0.5, 1.0] {
        let est = hockey_stick_estimate(
            logpdf(0.0),
            logpdf(shift),
            eps,
            |rng| rng.sample::<f64, _>(rand_distr::StandardNormal),
            200_000,
            0.95,
            &mut rng,
        )?;
        // Closed form for equal-variance Gaussians.
        let truth = normal.cdf(shift / 2.0 - eps / shift)
            - eps.exp() * normal.cdf(-shift / 2.0 - eps / shift);
        println!(
            "  eps {eps:4}: estimate {:.5} (CI [{:.5}, {:.5}]), probability bound {:.5}, closed form {:.5}",
            est.divergence,
            est.divergence_ci.0,
            est.divergence_ci.1,
            est.probability_bound,
            truth
        );
    }
    println!("at eps = 0 the divergence is the total variation distance");
    Ok(())
}
