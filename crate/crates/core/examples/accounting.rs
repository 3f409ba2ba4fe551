//! Privacy accounting arithmetic: k-fold composition and amplification by
//! subsampling, plus the chain used by the covariance estimation experiment.
//!
//! Run with: cargo run --release --example accounting

use dpsample::privacy::{advanced_composition, subsampling_amplification, CompositionQuery};
use dpsample::Result;

fn main() -> Result<()> {
    // Composing 32 runs of a (0.1, 1e-7)-DP mechanism.
    let query = CompositionQuery {
        eps0: 0.1,
        delta0: 1e-7,
        k: 32,
        delta1: 1e-6,
    };
    let composed = advanced_composition(&query)?;
    println!(
        "composition: {} runs at ({}, {:.0e}) -> ({:.4}, {:.3e})",
        query.k, query.eps0, query.delta0, composed.eps, composed.delta
    );
    println!("  naive sum would give eps {:.1}", query.eps0 * query.k as f64);

    // Running a (1, 1e-6)-DP mechanism on 50-of-10000 subsamples.
    let amplified = subsampling_amplification(1.0, 1e-6, 50, 10_000)?;
    println!(
        "subsampling: (1, 1e-6) on 50/10000 rows -> ({:.5}, {:.1e})",
        amplified.eps, amplified.delta
    );

    // The chain for L repeated subsampled releases.
    let rounds = 200;
    let total = advanced_composition(&CompositionQuery {
        eps0: amplified.eps,
        delta0: amplified.delta,
        k: rounds,
        delta1: rounds as f64 * amplified.delta,
    })?;
    println!(
        "{rounds} subsampled releases compose to ({:.4}, {:.2e})",
        total.eps, total.delta
    );
    Ok(())
}
