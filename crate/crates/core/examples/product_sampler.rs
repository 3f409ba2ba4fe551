//! Pure-DP sampling from an unknown product distribution on bits:
//! flip preprocessing, the dyadic bucket preconditioner, and the clipped
//! sampler, wired end to end.
//!
//! Run with: cargo run --release --example product_sampler

use dpsample::product::{end_to_end_product_sampler, BernoulliSupplier};
use dpsample::{ConstantsProfile, Result, RngStream};

fn main() -> Result<()> {
    let probs = vec![0.9, 0.35, 0.04, 0.6];
    let eps = 1.0;
    let alpha = 0.2;
    let profile = ConstantsProfile::practical();

    let mut supplier = BernoulliSupplier::new(probs.clone(), RngStream::new(5))?;
    let mut rng = RngStream::new(6);
    let out = end_to_end_product_sampler(&mut supplier, eps, alpha, &profile, &mut rng)?;

    println!("true marginals:   {probs:?}");
    println!("flip mask:        {:?}", out.flip_mask.flipped);
    println!("bucket levels:    {:?}", out.preconditioner.assignment.levels());
    println!("bucket weights:   {:?}", out.sampler_draw.weights);
    println!("clipped marginals (flipped orientation): {:?}", out.sampler_draw.clipped_probs);
    for round in &out.preconditioner.rounds {
        println!(
            "  round {}: trunc bound {:.0}, rows {}, survivors {}",
            round.level, round.trunc_bound, round.rows, round.survivors_before
        );
    }
    println!("stage budgets:    {:?} (total eps = {eps})", out.stage_eps);
    println!("released sample:  {:?}", out.bits);
    Ok(())
}
