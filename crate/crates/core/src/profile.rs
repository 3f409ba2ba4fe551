//! Universal-constant profiles.
//!
//! The parameter derivations depend on two tail-bound constants that the
//! analysis leaves unspecified — `c` (beta-tail) and `C` (Gaussian tail and
//! covariance concentration) — and on large leading multipliers (10^4, 1000,
//! ...) that make desk-scale runs infeasible. A profile fixes all of them.
//!
//! `PaperFaithful` keeps every multiplier at its full analytic value and requires
//! the caller to supply `c` and `C` explicitly; silently defaulting them
//! would fabricate guarantees the analysis does not give. `Practical`
//! substitutes desk-scale defaults (overridable per named multiplier) so
//! that distributional experiments can actually run; analytic privacy checks
//! are enforced in both modes.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{invalid_input, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScaleMode {
    PaperFaithful,
    Practical,
}

/// Named multipliers with their faithful and practical default values.
/// Overrides are consulted only in practical mode.
pub const MULTIPLIERS: &[(&str, f64, f64)] = &[
    // Truncation-radius multiplier of the known-covariance sampler.
    ("known_cov_radius", 1e4, 1.0),
    // Sample-count multiplier of the known-covariance sampler. This one is
    // the Gaussian-mechanism noise-multiplier requirement, so it is never
    // relaxed by default.
    ("known_cov_privacy", 10.0, 10.0),
    // Truncation-radius multiplier of the eigenvalue-tested sampler.
    ("bounded_cov_radius", 1e4, 1.0),
    // Pair-count multiplier of the eigenvalue-tested sampler.
    ("bounded_cov_pairs", 1e4, 1.0),
    // Truncation-radius multiplier of the simpler pair-difference sampler.
    ("simple_bounded_radius", 1e4, 1.0),
    // Sample-count multiplier of the simpler sampler; also privacy-critical.
    ("simple_bounded_privacy", 100.0, 100.0),
    // Bucket preconditioner truncation bound and per-round sample count.
    ("precond_trunc", 1000.0, 20.0),
    ("precond_rows", 1000.0, 50.0),
    // Product sampler truncation bound; its row count n = ceil(16 B / eps)
    // is tied to B, so privacy holds for whatever B is in force.
    ("product_trunc", 1000.0, 10.0),
    ("product_row_ratio", 16.0, 16.0),
];

/// Universal constants plus the scale mode controlling the large multipliers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantsProfile {
    /// Beta-tail constant `c`, in (0, 1).
    pub beta_tail_c: f64,
    /// Gaussian-tail / covariance-concentration constant `C`, at least 1.
    pub concentration_c: f64,
    pub scale_mode: ScaleMode,
    /// Practical-mode overrides, keyed by multiplier name.
    #[serde(default)]
    pub multiplier_overrides: BTreeMap<String, f64>,
}

impl ConstantsProfile {
    /// Paper-faithful profile; `c` and `C` must be supplied by the caller.
    pub fn paper_faithful(beta_tail_c: f64, concentration_c: f64) -> Result<Self> {
        let profile = Self {
            beta_tail_c,
            concentration_c,
            scale_mode: ScaleMode::PaperFaithful,
            multiplier_overrides: BTreeMap::new(),
        };
        profile.validate()?;
        Ok(profile)
    }

    /// Practical profile with conservative placeholder constants
    /// c = 0.01, C = 2. These are not values from the analysis.
    pub fn practical() -> Self {
        Self {
            beta_tail_c: 0.01,
            concentration_c: 2.0,
            scale_mode: ScaleMode::Practical,
            multiplier_overrides: BTreeMap::new(),
        }
    }

    pub fn with_override(mut self, name: &str, value: f64) -> Self {
        self.multiplier_overrides.insert(name.to_string(), value);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.beta_tail_c.is_nan() || self.beta_tail_c <= 0.0 || self.beta_tail_c >= 1.0 {
            return Err(invalid_input(format!(
                "beta-tail constant must lie in (0, 1), got {}",
                self.beta_tail_c
            )));
        }
        if !self.concentration_c.is_finite() || self.concentration_c < 1.0 {
            return Err(invalid_input(format!(
                "concentration constant must be >= 1, got {}",
                self.concentration_c
            )));
        }
        for (name, value) in &self.multiplier_overrides {
            if !value.is_finite() || *value <= 0.0 {
                return Err(invalid_input(format!(
                    "override for {name} must be positive and finite, got {value}"
                )));
            }
            if !MULTIPLIERS.iter().any(|(n, _, _)| n == name) {
                return Err(invalid_input(format!("unknown multiplier name: {name}")));
            }
        }
        Ok(())
    }

    /// Resolves a named multiplier under the current scale mode.
    pub fn multiplier(&self, name: &str) -> f64 {
        let (_, paper, practical) = MULTIPLIERS
            .iter()
            .find(|(n, _, _)| *n == name)
            .unwrap_or_else(|| panic!("unknown multiplier name: {name}"));
        match self.scale_mode {
            ScaleMode::PaperFaithful => *paper,
            ScaleMode::Practical => self
                .multiplier_overrides
                .get(name)
                .copied()
                .unwrap_or(*practical),
        }
    }

    pub fn is_paper_faithful(&self) -> bool {
        self.scale_mode == ScaleMode::PaperFaithful
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paper_mode_ignores_overrides() {
        let p = ConstantsProfile::paper_faithful(0.1, 2.0)
            .unwrap()
            .with_override("product_trunc", 5.0);
        // Overrides are only consulted in practical mode.
        assert_eq!(p.multiplier("product_trunc"), 1000.0);
        let q = ConstantsProfile::practical().with_override("product_trunc", 5.0);
        assert_eq!(q.multiplier("product_trunc"), 5.0);
        assert_eq!(ConstantsProfile::practical().multiplier("product_trunc"), 10.0);
    }

    #[test]
    fn validation_rejects_bad_constants() {
        assert!(ConstantsProfile::paper_faithful(0.0, 2.0).is_err());
        assert!(ConstantsProfile::paper_faithful(0.5, 0.5).is_err());
        let bad = ConstantsProfile::practical().with_override("no_such", 1.0);
        assert!(bad.validate().is_err());
    }
}
