//! Differentially private one-shot samplers.
//!
//! Given i.i.d. rows from an unknown distribution, the samplers in this
//! crate release a single draw from a distribution close to the source in
//! total variation, under an (epsilon, delta) differential privacy
//! guarantee with respect to substituting one row:
//!
//! * [`gaussian`] — multivariate Gaussians with known covariance, unknown
//!   bounded covariance (via a noisy eigenvalue test in the
//!   propose-test-release style), and a simpler bounded-covariance variant;
//! * [`reductions`] — wrappers lifting the bounded-mean and
//!   bounded-covariance samplers to unbounded means (rough mean first) and
//!   unbounded covariances (pluggable learner first);
//! * [`product`] — a pure-DP sampler for product distributions on bits,
//!   with flip preprocessing and a bucket preconditioner;
//! * [`privacy`] — composition and subsampling accounting, hockey-stick
//!   divergence estimation, an empirical epsilon audit, and a covariance
//!   estimation experiment;
//! * [`harness`] — dataset ingestion, experiment execution, and
//!   machine-readable reports backing the `dpsample` command-line tool.
//!
//! Everything randomized draws from an explicit seeded [`RngStream`], so
//! runs reproduce bit for bit.

pub mod data;
pub mod dist;
pub mod error;
pub mod gaussian;
pub mod harness;
pub mod numerics;
pub mod privacy;
pub mod product;
pub mod profile;
pub mod reductions;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
pub use privacy::PrivacyBudget;
pub use profile::{ConstantsProfile, ScaleMode};
pub use rng::RngStream;
