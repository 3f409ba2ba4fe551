//! Pure-DP sampling for product distributions on bits.
//!
//! The pipeline has three stages, each on fresh rows:
//!
//! 1. [`flip_preprocess`] estimates each marginal with Laplace noise and
//!    flips coordinates whose estimate exceeds 3/4, so later stages may
//!    assume small marginals.
//! 2. [`preconditioner`] places every marginal into a dyadic bucket
//!    `[2^{-l}/4, 3 2^{-l}/4]` by successive noisy thresholded means with
//!    geometrically shrinking truncation bounds.
//! 3. [`product_sampler`] forms weighted-truncated means, clips each
//!    estimate into `[1/(8 w_j), 7/(8 w_j)]` for `w_j = 2^{l_j}`, and
//!    returns one draw from the resulting product distribution. No noise is
//!    added in this stage; privacy comes entirely from truncation, clipping,
//!    and the row count `n = ceil(16 B / eps)`.
//!
//! [`end_to_end_product_sampler`] wires the stages together with an even
//! three-way budget split and un-flips the final draw.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::BitMatrix;
use crate::dist::laplace_sample;
use crate::error::{invalid_input, Result};
use crate::numerics::clip_scalar;
use crate::profile::ConstantsProfile;
use crate::rng::RngStream;

/// Number of dyadic bucket levels, `L = ceil(log2(2 d / alpha))`.
pub fn bucket_count(d: usize, alpha: f64) -> Result<u32> {
    if d == 0 {
        return Err(invalid_input("dimension must be >= 1"));
    }
    if alpha.is_nan() || alpha <= 0.0 || alpha > 0.5 {
        return Err(invalid_input(format!("alpha must lie in (0, 1/2], got {alpha}")));
    }
    let levels = (2.0 * d as f64 / alpha).log2().ceil();
    if levels.is_nan() || !(1.0..=62.0).contains(&levels) {
        return Err(invalid_input(format!("bucket count out of range: {levels}")));
    }
    Ok(levels as u32)
}

/// Per-coordinate dyadic bucket indices produced by the preconditioner;
/// every level lies in `0..=max_level`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BucketAssignment {
    levels: Vec<u32>,
    max_level: u32,
}

impl BucketAssignment {
    pub fn new(levels: Vec<u32>, max_level: u32) -> Result<Self> {
        if levels.is_empty() {
            return Err(invalid_input("bucket assignment must be non-empty"));
        }
        if levels.iter().any(|&l| l > max_level) {
            return Err(invalid_input("bucket level exceeds the maximum"));
        }
        Ok(Self { levels, max_level })
    }

    pub fn levels(&self) -> &[u32] {
        &self.levels
    }

    pub fn max_level(&self) -> u32 {
        self.max_level
    }

    pub fn dim(&self) -> usize {
        self.levels.len()
    }

    /// Per-coordinate weights `w_j = 2^{l_j}`.
    pub fn weights(&self) -> Vec<f64> {
        self.levels.iter().map(|&l| (l as f64).exp2()).collect()
    }
}

/// Coordinates flipped by the preprocessing stage.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlipMask {
    pub flipped: Vec<bool>,
}

/// XORs the mask onto every row; applying the same mask twice restores the
/// original matrix.
pub fn apply_flip_mask(data: &BitMatrix, mask: &FlipMask) -> Result<BitMatrix> {
    if mask.flipped.len() != data.dim() {
        return Err(invalid_input("flip mask dimension mismatch"));
    }
    let mut out = data.clone();
    let d = data.dim();
    for (pos, bit) in out.bits_mut().iter_mut().enumerate() {
        if mask.flipped[pos % d] {
            *bit ^= 1;
        }
    }
    Ok(out)
}

/// XORs the mask onto a single bit row.
pub fn unflip_bits(bits: &[u8], mask: &FlipMask) -> Result<Vec<u8>> {
    if mask.flipped.len() != bits.len() {
        return Err(invalid_input("flip mask dimension mismatch"));
    }
    Ok(bits
        .iter()
        .zip(&mask.flipped)
        .map(|(&b, &f)| if f { b ^ 1 } else { b })
        .collect())
}

/// Estimates each marginal with Laplace noise and flips coordinates whose
/// noisy mean exceeds 3/4. One substituted row moves each of the `d`
/// coordinate means by at most `1/n`, an l1 sensitivity of `d/n`, so each
/// coordinate gets independent `Lap(d / (n eps_flip))` noise for
/// `eps_flip`-DP overall.
pub fn flip_preprocess(
    data: &BitMatrix,
    eps_flip: f64,
    rng: &mut RngStream,
) -> Result<(FlipMask, BitMatrix)> {
    if !eps_flip.is_finite() || eps_flip <= 0.0 {
        return Err(invalid_input(format!("eps_flip must be positive, got {eps_flip}")));
    }
    let n = data.n_rows();
    let d = data.dim();
    let scale = d as f64 / (n as f64 * eps_flip);
    let means = data.column_means();
    let mut flipped = Vec::with_capacity(d);
    for &mean in &means {
        let noisy = mean + laplace_sample(scale, rng)?;
        flipped.push(noisy > 0.75);
    }
    let mask = FlipMask { flipped };
    let out = apply_flip_mask(data, &mask)?;
    Ok((mask, out))
}

/// A source of fresh sample rows for the staged pipeline. Real datasets are
/// served by [`MatrixSupplier`]; synthetic experiments use
/// [`BernoulliSupplier`].
pub trait BitSupplier {
    fn dim(&self) -> usize;

    /// Produces exactly `rows` fresh records, erring when exhausted.
    fn draw(&mut self, rows: usize) -> Result<BitMatrix>;
}

/// Draws i.i.d. rows from a fixed product distribution.
#[derive(Debug, Clone)]
pub struct BernoulliSupplier {
    probs: Vec<f64>,
    rng: RngStream,
}

impl BernoulliSupplier {
    pub fn new(probs: Vec<f64>, rng: RngStream) -> Result<Self> {
        if probs.is_empty() {
            return Err(invalid_input("probability vector must be non-empty"));
        }
        if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(invalid_input("probabilities must lie in [0, 1]"));
        }
        Ok(Self { probs, rng })
    }
}

impl BitSupplier for BernoulliSupplier {
    fn dim(&self) -> usize {
        self.probs.len()
    }

    fn draw(&mut self, rows: usize) -> Result<BitMatrix> {
        let d = self.probs.len();
        let mut bits = Vec::with_capacity(rows * d);
        for _ in 0..rows {
            for &p in &self.probs {
                bits.push(u8::from(self.rng.gen::<f64>() < p));
            }
        }
        BitMatrix::from_row_major(rows, d, &bits)
    }
}

/// Serves consecutive slices of a fixed matrix, erring on exhaustion.
#[derive(Debug)]
pub struct MatrixSupplier<'a> {
    data: &'a BitMatrix,
    cursor: usize,
}

impl<'a> MatrixSupplier<'a> {
    pub fn new(data: &'a BitMatrix) -> Self {
        Self { data, cursor: 0 }
    }

    pub fn consumed(&self) -> usize {
        self.cursor
    }
}

impl BitSupplier for MatrixSupplier<'_> {
    fn dim(&self) -> usize {
        self.data.dim()
    }

    fn draw(&mut self, rows: usize) -> Result<BitMatrix> {
        let end = self.cursor.checked_add(rows).filter(|&e| e <= self.data.n_rows());
        let end = end.ok_or_else(|| {
            invalid_input(format!(
                "supplier exhausted: {} rows requested at offset {}, dataset has {}",
                rows,
                self.cursor,
                self.data.n_rows()
            ))
        })?;
        let out = self.data.slice_rows(self.cursor, end)?;
        self.cursor = end;
        Ok(out)
    }
}

/// Per-round diagnostics of a preconditioner run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PreconditionerRound {
    pub level: u32,
    pub trunc_bound: f64,
    pub rows: usize,
    pub survivors_before: usize,
}

/// Result of the preconditioner with its diagnostics.
#[derive(Debug, Clone)]
pub struct PreconditionerTrace {
    pub assignment: BucketAssignment,
    pub rounds: Vec<PreconditionerRound>,
}

/// The deterministic per-round truncation bounds and row counts of the
/// bucket search: round `l` uses `B_l = k_B (d 2^{-l} + 1)` and
/// `n_l = ceil((k_n / eps) B_l 2^l ln(d/(alpha beta)))`.
pub fn preconditioner_schedule(
    d: usize,
    eps: f64,
    alpha: f64,
    beta: f64,
    profile: &ConstantsProfile,
) -> Result<Vec<PreconditionerRound>> {
    if !eps.is_finite() || eps <= 0.0 {
        return Err(invalid_input(format!("eps must be positive, got {eps}")));
    }
    if beta.is_nan() || beta <= 0.0 || beta >= 1.0 {
        return Err(invalid_input(format!("beta must lie in (0, 1), got {beta}")));
    }
    profile.validate()?;
    let max_level = bucket_count(d, alpha)?;
    let k_trunc = profile.multiplier("precond_trunc");
    let k_rows = profile.multiplier("precond_rows");
    let log_term = (d as f64 / (alpha * beta)).ln().max(1.0);
    let mut rounds = Vec::with_capacity(max_level as usize);
    for level in 0..max_level {
        let scale = (level as f64).exp2();
        let trunc_bound = k_trunc * (d as f64 / scale + 1.0);
        let rows_float = (k_rows / eps * trunc_bound * scale * log_term).ceil();
        if !rows_float.is_finite() || rows_float >= 9.0e18 {
            return Err(invalid_input("preconditioner round size overflows"));
        }
        rounds.push(PreconditionerRound {
            level,
            trunc_bound,
            rows: (rows_float as usize).max(1),
            survivors_before: d,
        });
    }
    Ok(rounds)
}

/// Runs the dyadic bucket search. Round `l` (0-based) draws
/// `n_l = ceil((k_n / eps) B_l 2^l ln(d/(alpha beta)))` fresh rows with
/// truncation bound `B_l = k_B (d 2^{-l} + 1)`, computes the noisy truncated
/// mean `q` of the surviving coordinates, and assigns level `l` to those
/// with `q > 0.57 * 2^{-(l+1)}`; the rest advance. Coordinates surviving all
/// rounds get level `L`.
///
/// The assignment threshold uses the bucket's half-scale `2^{-(l+1)}`: with
/// the written `2^{-l}` scale a marginal like 0.5 passes round 0 (since
/// 0.5 <= 0.57) and is then caught at level 1, outside the level-1 bucket
/// `[1/8, 3/8]`, so the bucket guarantee would fail deterministically. The
/// half-scale threshold separates `[2^{-l}/4, 3 2^{-l}/4]` from the next
/// bucket with margin on both sides.
///
/// Each round is `eps`-DP through its Laplace noise and rounds use disjoint
/// fresh rows, so the whole search is `eps`-DP.
pub fn preconditioner<S: BitSupplier>(
    supplier: &mut S,
    eps: f64,
    alpha: f64,
    beta: f64,
    profile: &ConstantsProfile,
    rng: &mut RngStream,
) -> Result<PreconditionerTrace> {
    if !eps.is_finite() || eps <= 0.0 {
        return Err(invalid_input(format!("eps must be positive, got {eps}")));
    }
    if beta.is_nan() || beta <= 0.0 || beta >= 1.0 {
        return Err(invalid_input(format!("beta must lie in (0, 1), got {beta}")));
    }
    profile.validate()?;
    let d = supplier.dim();
    let max_level = bucket_count(d, alpha)?;
    let schedule = preconditioner_schedule(d, eps, alpha, beta, profile)?;

    let mut levels = vec![max_level; d];
    let mut survivors: Vec<usize> = (0..d).collect();
    let mut rounds = Vec::with_capacity(max_level as usize);
    for planned in schedule {
        if survivors.is_empty() {
            break;
        }
        let level = planned.level;
        let scale = (level as f64).exp2(); // 2^l
        let trunc_bound = planned.trunc_bound;
        let rows = planned.rows;
        rounds.push(PreconditionerRound {
            level,
            trunc_bound,
            rows,
            survivors_before: survivors.len(),
        });

        let batch = supplier.draw(rows)?;
        if batch.dim() != d {
            return Err(invalid_input("supplier produced rows of the wrong dimension"));
        }
        // Truncated sums over the surviving coordinates only.
        let mut sums = vec![0.0f64; survivors.len()];
        for i in 0..rows {
            let row = batch.row(i);
            let mut ones = 0u64;
            for &j in &survivors {
                ones += u64::from(row[j]);
            }
            let ones = ones as f64;
            let factor = if ones <= trunc_bound { 1.0 } else { trunc_bound / ones };
            for (slot, &j) in sums.iter_mut().zip(&survivors) {
                if row[j] == 1 {
                    *slot += factor;
                }
            }
        }
        let threshold = 0.57 * 0.5 / scale; // 0.57 * 2^{-(l+1)}
        let mut next = Vec::with_capacity(survivors.len());
        for (slot, &j) in sums.iter().zip(&survivors) {
            let q = (slot + laplace_sample(trunc_bound / eps, rng)?) / rows as f64;
            if q > threshold {
                levels[j] = level;
            } else {
                next.push(j);
            }
        }
        survivors = next;
    }

    Ok(PreconditionerTrace {
        assignment: BucketAssignment::new(levels, max_level)?,
        rounds,
    })
}

/// Row count and truncation bound of the final sampler stage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProductParams {
    /// Weighted-l1 truncation bound `B = k (d/alpha) ln(d/alpha)`.
    pub trunc_bound: f64,
    /// Rows consumed, `n = ceil(r B / eps)`; the privacy ratio depends only
    /// on `r B / n <= eps`.
    pub rows: usize,
    /// The ratio multiplier `r` (16 unless overridden).
    pub row_ratio: f64,
}

/// Derives the sampler-stage parameters for the given budget and accuracy.
pub fn derive_product_params(
    d: usize,
    eps: f64,
    alpha: f64,
    profile: &ConstantsProfile,
) -> Result<ProductParams> {
    if d == 0 {
        return Err(invalid_input("dimension must be >= 1"));
    }
    if !eps.is_finite() || eps <= 0.0 {
        return Err(invalid_input(format!("eps must be positive, got {eps}")));
    }
    if alpha.is_nan() || alpha <= 0.0 || alpha > 0.5 {
        return Err(invalid_input(format!("alpha must lie in (0, 1/2], got {alpha}")));
    }
    profile.validate()?;
    let k = profile.multiplier("product_trunc");
    let ratio = profile.multiplier("product_row_ratio");
    let ratio_arg = d as f64 / alpha;
    let trunc_bound = k * ratio_arg * ratio_arg.ln().max(1.0);
    let rows_float = (ratio * trunc_bound / eps).ceil();
    if !rows_float.is_finite() || rows_float >= 9.0e18 {
        return Err(invalid_input("product sampler row count overflows"));
    }
    Ok(ProductParams {
        trunc_bound,
        rows: (rows_float as usize).max(1),
        row_ratio: ratio,
    })
}

/// One output of the product sampler, with the clipped marginals reported.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProductDraw {
    pub bits: Vec<u8>,
    /// The clipped marginal estimates `p~_j in [1/(8 w_j), 7/(8 w_j)]`.
    pub clipped_probs: Vec<f64>,
    pub weights: Vec<f64>,
    pub params: ProductParams,
}

pub(crate) fn weighted_truncated_mean(
    data: &BitMatrix,
    weights: &[f64],
    trunc_bound: f64,
) -> Vec<f64> {
    let d = data.dim();
    let mut sums = vec![0.0f64; d];
    for i in 0..data.n_rows() {
        let row = data.row(i);
        let mut weighted: f64 = 0.0;
        for j in 0..d {
            if row[j] == 1 {
                weighted += weights[j];
            }
        }
        let factor = if weighted <= trunc_bound { 1.0 } else { trunc_bound / weighted };
        for j in 0..d {
            if row[j] == 1 {
                sums[j] += factor;
            }
        }
    }
    sums.iter().map(|s| s / data.n_rows() as f64).collect()
}

/// The final stage: weighted-truncated marginal means, clipping into
/// `[1/(8 w_j), 7/(8 w_j)]`, and one draw from the clipped product
/// distribution. `data` must hold exactly the derived row count. Privacy is
/// `eps`-DP for any bucket levels; the levels only affect accuracy.
pub fn product_sampler(
    data: &BitMatrix,
    buckets: &BucketAssignment,
    eps: f64,
    alpha: f64,
    profile: &ConstantsProfile,
    rng: &mut RngStream,
) -> Result<ProductDraw> {
    let d = data.dim();
    if buckets.dim() != d {
        return Err(invalid_input("bucket assignment dimension mismatch"));
    }
    let params = derive_product_params(d, eps, alpha, profile)?;
    if data.n_rows() != params.rows {
        return Err(invalid_input(format!(
            "data has {} rows, parameters require exactly {}",
            data.n_rows(),
            params.rows
        )));
    }
    let weights = buckets.weights();
    let q = weighted_truncated_mean(data, &weights, params.trunc_bound);
    let mut clipped = Vec::with_capacity(d);
    for j in 0..d {
        clipped.push(clip_scalar(q[j], 1.0 / (8.0 * weights[j]), 7.0 / (8.0 * weights[j]))?);
    }
    let bits: Vec<u8> = clipped.iter().map(|&p| u8::from(rng.gen::<f64>() < p)).collect();
    Ok(ProductDraw {
        bits,
        clipped_probs: clipped,
        weights,
        params,
    })
}

/// Full pipeline output.
#[derive(Debug, Clone)]
pub struct EndToEndProductDraw {
    /// The released sample, in the original (un-flipped) orientation.
    pub bits: Vec<u8>,
    pub flip_mask: FlipMask,
    pub preconditioner: PreconditionerTrace,
    pub sampler_draw: ProductDraw,
    /// Stage budgets; the total is their sum (pure-DP basic composition).
    pub stage_eps: [f64; 3],
}

/// Runs flip -> preconditioner -> sampler on fresh rows from the supplier,
/// splitting `eps` evenly across the three stages, with internal accuracy
/// `alpha/2` and preconditioner failure probability `alpha / (24 d)`, and
/// un-flips the final draw.
pub fn end_to_end_product_sampler<S: BitSupplier>(
    supplier: &mut S,
    eps: f64,
    alpha: f64,
    profile: &ConstantsProfile,
    rng: &mut RngStream,
) -> Result<EndToEndProductDraw> {
    if !eps.is_finite() || eps <= 0.0 {
        return Err(invalid_input(format!("eps must be positive, got {eps}")));
    }
    if alpha.is_nan() || alpha <= 0.0 || alpha > 0.5 {
        return Err(invalid_input(format!("alpha must lie in (0, 1/2], got {alpha}")));
    }
    let d = supplier.dim();
    let stage_eps = eps / 3.0;
    let inner_alpha = alpha / 2.0;
    let beta = alpha / (24.0 * d as f64);

    // The flip stage reuses the sampler-stage row count.
    let params = derive_product_params(d, stage_eps, inner_alpha, profile)?;
    let flip_rows = supplier.draw(params.rows)?;
    let (mask, _) = flip_preprocess(&flip_rows, stage_eps, rng)?;

    let mut flipped_supplier = FlippedSupplier {
        inner: supplier,
        mask: mask.clone(),
    };
    let trace = preconditioner(&mut flipped_supplier, stage_eps, inner_alpha, beta, profile, rng)?;

    let sampler_rows = flipped_supplier.draw(params.rows)?;
    let draw = product_sampler(&sampler_rows, &trace.assignment, stage_eps, inner_alpha, profile, rng)?;
    let bits = unflip_bits(&draw.bits, &mask)?;

    Ok(EndToEndProductDraw {
        bits,
        flip_mask: mask,
        preconditioner: trace,
        sampler_draw: draw,
        stage_eps: [stage_eps, stage_eps, stage_eps],
    })
}

struct FlippedSupplier<'a, S: BitSupplier> {
    inner: &'a mut S,
    mask: FlipMask,
}

impl<S: BitSupplier> BitSupplier for FlippedSupplier<'_, S> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn draw(&mut self, rows: usize) -> Result<BitMatrix> {
        apply_flip_mask(&self.inner.draw(rows)?, &self.mask)
    }
}
