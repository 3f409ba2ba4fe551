//! Noise distributions used by the samplers: shifted truncated discrete
//! Laplace, continuous Laplace, multivariate Gaussian, uniform sphere, and
//! the density of a sphere projected onto its leading coordinates.
//!
//! All samplers draw from an explicit [`RngStream`]; concurrent callers must
//! use independent streams.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use statrs::function::gamma::ln_gamma;

use crate::error::{invalid_input, Result};
use crate::numerics::PsdMatrix;
use crate::rng::RngStream;

/// Parameters of the shifted truncated discrete Laplace distribution.
///
/// The shift is `s = ceil(sensitivity * (1 + ln(1/delta) / eps))` and the
/// support is the integers `[-2s, 0]`, with mass proportional to
/// `exp(-eps * |x + s|)`. All draws are nonpositive. Logarithms are natural.
#[derive(Debug, Clone, PartialEq)]
pub struct StlapParams {
    eps: f64,
    delta: f64,
    sensitivity: f64,
    shift: f64,
}

impl StlapParams {
    pub fn new(eps: f64, delta: f64, sensitivity: f64) -> Result<Self> {
        if !eps.is_finite() || eps <= 0.0 {
            return Err(invalid_input(format!("eps must be positive and finite, got {eps}")));
        }
        if delta.is_nan() || delta <= 0.0 || delta >= 1.0 {
            return Err(invalid_input(format!("delta must lie in (0, 1), got {delta}")));
        }
        if !sensitivity.is_finite() || sensitivity <= 0.0 {
            return Err(invalid_input(format!(
                "sensitivity must be positive and finite, got {sensitivity}"
            )));
        }
        let shift = (sensitivity * (1.0 + (1.0 / delta).ln() / eps)).ceil();
        Ok(Self {
            eps,
            delta,
            sensitivity,
            shift,
        })
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn sensitivity(&self) -> f64 {
        self.sensitivity
    }

    /// The shift `s`; integer-valued, stored as `f64` so that very large
    /// sensitivities do not overflow.
    pub fn shift(&self) -> f64 {
        self.shift
    }

    /// Smallest point of the support, `-2s`.
    pub fn support_min(&self) -> f64 {
        -2.0 * self.shift
    }

    /// Total unnormalized mass: `1 + 2 sum_{m=1}^{s} exp(-eps m)`.
    fn unnormalized_total(&self) -> f64 {
        let q = (-self.eps).exp();
        if q == 0.0 {
            return 1.0;
        }
        // Geometric series truncated at s; exp(-eps * s) underflows to 0 for
        // large s, which is exactly the untruncated limit.
        let tail = q * (1.0 - (-self.eps * self.shift).exp()) / (1.0 - q);
        1.0 + 2.0 * tail
    }

    /// Normalized probability mass at the integer point `x`; zero off-support.
    pub fn pmf(&self, x: f64) -> f64 {
        if x < self.support_min() || x > 0.0 || x.fract() != 0.0 {
            return 0.0;
        }
        (-self.eps * (x + self.shift).abs()).exp() / self.unnormalized_total()
    }

    /// Exact draw by closed-form inverse transform over the finite support.
    ///
    /// Returned values are integer-valued `f64` in `[-2s, 0]` (exact while
    /// `2s < 2^53`; beyond that the regime is abort-dominated anyway).
    pub fn sample(&self, rng: &mut RngStream) -> f64 {
        let s = self.shift;
        let total = self.unnormalized_total();
        let u: f64 = rng.gen::<f64>() * total;
        if u < 1.0 {
            return -s; // center point, |x + s| = 0
        }
        let v = (u - 1.0) / (total - 1.0); // uniform over the two tails
        let (sign, w) = if v < 0.5 { (-1.0, v * 2.0) } else { (1.0, (v - 0.5) * 2.0) };
        let tail_mass = 1.0 - (-self.eps * s).exp(); // mass of geometric magnitudes 1..s, rescaled
        // Inverse CDF of P(M <= m) = (1 - q^m) / (1 - q^s) on {1, ..., s}.
        let m = ((1.0 - w * tail_mass).ln() / -self.eps).ceil().clamp(1.0, s);
        sign * m - s
    }
}

/// One draw from the centered Laplace distribution with the given scale.
pub fn laplace_sample(scale: f64, rng: &mut RngStream) -> Result<f64> {
    if !scale.is_finite() || scale <= 0.0 {
        return Err(invalid_input(format!("Laplace scale must be positive, got {scale}")));
    }
    let u = loop {
        let u: f64 = rng.gen();
        if u > 0.0 && u < 1.0 {
            break u;
        }
    };
    Ok(if u < 0.5 {
        scale * (2.0 * u).ln()
    } else {
        -scale * (2.0 * (1.0 - u)).ln()
    })
}

/// Vector of independent standard normals.
pub fn standard_normal_vector(dim: usize, rng: &mut RngStream) -> DVector<f64> {
    DVector::from_fn(dim, |_, _| rng.sample(StandardNormal))
}

/// Reusable sampler for `N(mean, cov)`; the matrix square root is factored once.
#[derive(Debug, Clone)]
pub struct GaussianVectorSampler {
    mean: DVector<f64>,
    factor: DMatrix<f64>,
}

impl GaussianVectorSampler {
    pub fn new(mean: DVector<f64>, cov: &PsdMatrix) -> Result<Self> {
        if mean.len() != cov.dim() {
            return Err(invalid_input(format!(
                "mean has dimension {}, covariance is {} x {}",
                mean.len(),
                cov.dim(),
                cov.dim()
            )));
        }
        Ok(Self {
            mean,
            factor: cov.sqrt().into_matrix(),
        })
    }

    pub fn draw(&self, rng: &mut RngStream) -> DVector<f64> {
        &self.mean + &self.factor * standard_normal_vector(self.mean.len(), rng)
    }
}

/// One draw from `N(mean, cov)` via the PSD square root of `cov`.
pub fn gaussian_vector_sample(
    mean: &DVector<f64>,
    cov: &PsdMatrix,
    rng: &mut RngStream,
) -> Result<DVector<f64>> {
    Ok(GaussianVectorSampler::new(mean.clone(), cov)?.draw(rng))
}

/// Uniform draw from the unit sphere in the given dimension, via a
/// normalized standard Gaussian vector.
pub fn unit_sphere_sample(dim: usize, rng: &mut RngStream) -> Result<DVector<f64>> {
    if dim == 0 {
        return Err(invalid_input("sphere dimension must be >= 1"));
    }
    loop {
        let v = standard_normal_vector(dim, rng);
        let norm = v.norm();
        if norm > 1e-12 {
            return Ok(v / norm);
        }
    }
}

/// Log density of the first `proj_dim` coordinates of a uniform point on the
/// unit sphere in `ambient_dim` dimensions, with the normalization constant
/// resolved in closed form:
/// `f(z) = (1 - ||z||^2)^{(ambient - proj)/2 - 1} / Z` on the open unit ball,
/// `Z = pi^{proj/2} * Gamma((ambient - proj)/2) / Gamma(ambient/2)`.
pub fn projected_sphere_logpdf(ambient_dim: usize, proj_dim: usize, z: &DVector<f64>) -> Result<f64> {
    if proj_dim == 0 || proj_dim >= ambient_dim {
        return Err(invalid_input(format!(
            "projection dimension must satisfy 1 <= i < d, got i = {proj_dim}, d = {ambient_dim}"
        )));
    }
    if z.len() != proj_dim {
        return Err(invalid_input(format!(
            "point has dimension {}, expected {}",
            z.len(),
            proj_dim
        )));
    }
    let norm_sq = z.norm_squared();
    if norm_sq >= 1.0 {
        return Ok(f64::NEG_INFINITY);
    }
    let d = ambient_dim as f64;
    let i = proj_dim as f64;
    let exponent = (d - i) / 2.0 - 1.0;
    let log_z = 0.5 * i * std::f64::consts::PI.ln() + ln_gamma((d - i) / 2.0) - ln_gamma(d / 2.0);
    Ok(exponent * (1.0 - norm_sq).ln() - log_z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::ks_statistic;
    use statrs::distribution::{Beta, ContinuousCDF};

    #[test]
    fn stlap_shift_example() {
        // eps = 1, delta = e^{-1}, sensitivity = 1 gives s = 2 and support [-4, 0].
        let p = StlapParams::new(1.0, (-1.0f64).exp(), 1.0).unwrap();
        assert_eq!(p.shift(), 2.0);
        assert_eq!(p.support_min(), -4.0);
        assert!(p.pmf(-5.0) == 0.0 && p.pmf(1.0) == 0.0 && p.pmf(-0.5) == 0.0);
    }

    #[test]
    fn stlap_pmf_ratio_and_normalization() {
        let p = StlapParams::new(1.0, (-1.0f64).exp(), 1.0).unwrap();
        let ratio = p.pmf(-1.0) / p.pmf(-2.0);
        assert!((ratio - (-1.0f64).exp()).abs() < 1e-12);
        let sum: f64 = (-4..=0).map(|x| p.pmf(x as f64)).sum();
        assert!((sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn stlap_pmf_normalizes_on_random_parameters() {
        let mut rng = RngStream::new(8);
        for _ in 0..50 {
            let eps = 0.1 + rng.gen::<f64>() * 2.0;
            let delta = 0.001 + rng.gen::<f64>() * 0.4;
            let sens = 0.5 + rng.gen::<f64>() * 3.0;
            let p = StlapParams::new(eps, delta, sens).unwrap();
            let lo = p.support_min() as i64;
            let sum: f64 = (lo..=0).map(|x| p.pmf(x as f64)).sum();
            assert!((sum - 1.0).abs() < 1e-12, "sum {sum} for eps {eps}");
        }
    }

    #[test]
    fn stlap_samples_stay_in_support_and_match_pmf() {
        let p = StlapParams::new(0.8, 0.05, 1.0).unwrap();
        let mut rng = RngStream::new(31);
        let lo = p.support_min() as i64;
        let mut counts = vec![0u64; (-lo + 1) as usize];
        let trials = 1_000_000;
        for _ in 0..trials {
            let x = p.sample(&mut rng);
            assert!(x <= 0.0 && x >= p.support_min());
            assert_eq!(x.fract(), 0.0);
            counts[(x - lo as f64) as usize] += 1;
        }
        let mut max_err = 0.0f64;
        let mut mode_idx = 0;
        for (i, &c) in counts.iter().enumerate() {
            let emp = c as f64 / trials as f64;
            max_err = max_err.max((emp - p.pmf((lo + i as i64) as f64)).abs());
            if counts[i] > counts[mode_idx] {
                mode_idx = i;
            }
        }
        assert!(max_err <= 0.003, "L-inf gap {max_err}");
        assert_eq!(lo + mode_idx as i64, -(p.shift() as i64), "mode should sit at -s");
    }

    #[test]
    fn stlap_handles_huge_shift() {
        let p = StlapParams::new(0.5, 0.01, 2e18).unwrap();
        let mut rng = RngStream::new(1);
        for _ in 0..100 {
            let x = p.sample(&mut rng);
            assert!(x <= 0.0 && x >= p.support_min());
        }
    }

    #[test]
    fn laplace_moments_and_tail() {
        let mut rng = RngStream::new(17);
        let n = 1_000_000;
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        let mut tail = 0u64;
        let cut = 100.0f64.ln();
        for _ in 0..n {
            let x = laplace_sample(1.0, &mut rng).unwrap();
            sum += x;
            sum_sq += x * x;
            if x.abs() > cut {
                tail += 1;
            }
        }
        let mean = sum / n as f64;
        let var = sum_sq / n as f64 - mean * mean;
        assert!(mean.abs() <= 0.005, "mean {mean}");
        assert!((1.98..=2.02).contains(&var), "variance {var}");
        // P(|X| > ln 100) = 1/100 for unit scale.
        let frac = tail as f64 / n as f64;
        assert!((frac - 0.01).abs() <= 0.002, "tail fraction {frac}");
    }

    #[test]
    fn gaussian_zero_covariance_returns_mean() {
        let mean = DVector::from_vec(vec![1.0, -2.0]);
        let cov = PsdMatrix::from_diagonal(&[0.0, 0.0]).unwrap();
        let mut rng = RngStream::new(4);
        let x = gaussian_vector_sample(&mean, &cov, &mut rng).unwrap();
        assert_eq!(x, mean);
    }

    #[test]
    fn gaussian_empirical_covariance() {
        let cov = PsdMatrix::from_diagonal(&[1.0, 4.0]).unwrap();
        let sampler = GaussianVectorSampler::new(DVector::zeros(2), &cov).unwrap();
        let mut rng = RngStream::new(12);
        let n = 100_000;
        let mut acc = DMatrix::zeros(2, 2);
        for _ in 0..n {
            let x = sampler.draw(&mut rng);
            acc += &x * x.transpose();
        }
        acc /= n as f64;
        let gap = (acc - cov.matrix()).norm();
        assert!(gap <= 0.1, "Frobenius gap {gap:.3}");
    }

    #[test]
    fn gaussian_affine_closure() {
        // A * sample(0, I) + mu is distributed as sample(mu, A A^T).
        use crate::stats::{energy_two_sample_test, TwoSampleConfig};
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, -0.3, 2.0]);
        let mu = DVector::from_vec(vec![1.0, -1.0]);
        let cov = PsdMatrix::new(&a * a.transpose()).unwrap();
        let direct = GaussianVectorSampler::new(mu.clone(), &cov).unwrap();
        let mut rng = RngStream::new(23);
        let mut mapped = Vec::new();
        let mut target = Vec::new();
        for _ in 0..1500 {
            mapped.push(&a * standard_normal_vector(2, &mut rng) + &mu);
            target.push(direct.draw(&mut rng));
        }
        let out = energy_two_sample_test(
            &mapped,
            &target,
            &TwoSampleConfig {
                max_points_per_side: 700,
                permutations: 99,
                ..Default::default()
            },
            &mut rng,
        )
        .unwrap();
        assert!(!out.reject, "p-value {}", out.p_value);
    }

    #[test]
    fn gaussian_squared_norm_mean_near_dimension() {
        let d = 6;
        let cov = PsdMatrix::identity(d);
        let sampler = GaussianVectorSampler::new(DVector::zeros(d), &cov).unwrap();
        let mut rng = RngStream::new(2);
        let trials = 100_000;
        let mut acc = 0.0;
        for _ in 0..trials {
            acc += sampler.draw(&mut rng).norm_squared();
        }
        let mean = acc / trials as f64;
        let margin = 3.0 * (2.0 * d as f64).sqrt() / (trials as f64).sqrt();
        assert!((mean - d as f64).abs() <= margin, "mean {mean}, margin {margin}");
    }

    #[test]
    fn sphere_draws_have_unit_norm_and_centered_coordinates() {
        let mut rng = RngStream::new(9);
        let q = 5;
        let n = 1_000_000;
        let mut coord_sums = vec![0.0f64; q];
        for _ in 0..n {
            let v = unit_sphere_sample(q, &mut rng).unwrap();
            assert!((v.norm() - 1.0).abs() <= 1e-12);
            for (j, s) in coord_sums.iter_mut().enumerate() {
                *s += v[j];
            }
        }
        for s in coord_sums {
            assert!((s / n as f64).abs() <= 0.004);
        }
    }

    #[test]
    fn sphere_first_coordinate_uniform_in_dimension_three() {
        // At q = 3 the projection onto one coordinate is uniform on [-1, 1].
        let mut rng = RngStream::new(14);
        let n = 100_000;
        let mut xs: Vec<f64> = (0..n)
            .map(|_| unit_sphere_sample(3, &mut rng).unwrap()[0])
            .collect();
        xs.sort_by(f64::total_cmp);
        let ks = ks_statistic(&xs, |x| ((x + 1.0) / 2.0).clamp(0.0, 1.0));
        assert!(ks <= 0.01, "KS statistic {ks}");
    }

    #[test]
    fn sphere_squared_coordinate_is_beta() {
        let mut rng = RngStream::new(15);
        for &q in &[3usize, 10, 50] {
            let beta = Beta::new(0.5, (q as f64 - 1.0) / 2.0).unwrap();
            let n = 100_000;
            let mut xs: Vec<f64> = (0..n)
                .map(|_| unit_sphere_sample(q, &mut rng).unwrap()[0].powi(2))
                .collect();
            xs.sort_by(f64::total_cmp);
            let ks = ks_statistic(&xs, |x| beta.cdf(x));
            assert!(ks <= 0.01, "q = {q}: KS statistic {ks}");
        }
    }

    #[test]
    fn projected_logpdf_constant_cases() {
        // d = 3, i = 1: uniform density 1/2 on (-1, 1).
        let z = DVector::from_vec(vec![0.3]);
        let lp = projected_sphere_logpdf(3, 1, &z).unwrap();
        assert!((lp - 0.5f64.ln()).abs() < 1e-12);
        // d = 4, i = 2: uniform density 1/pi on the unit disk.
        let z = DVector::from_vec(vec![0.3, -0.4]);
        let lp = projected_sphere_logpdf(4, 2, &z).unwrap();
        assert!((lp - (1.0 / std::f64::consts::PI).ln()).abs() < 1e-12);
        // Outside the ball the density vanishes.
        let z = DVector::from_vec(vec![1.2]);
        assert_eq!(projected_sphere_logpdf(3, 1, &z).unwrap(), f64::NEG_INFINITY);
        assert!(projected_sphere_logpdf(3, 3, &DVector::zeros(3)).is_err());
    }

    #[test]
    fn projected_logpdf_matches_sphere_histogram() {
        // Histogram of the first coordinate at d = 10 vs the closed form.
        let mut rng = RngStream::new(40);
        let n = 200_000;
        let bins = 20;
        let mut counts = vec![0u64; bins];
        for _ in 0..n {
            let x = unit_sphere_sample(10, &mut rng).unwrap()[0];
            let b = (((x + 1.0) / 2.0) * bins as f64).floor().clamp(0.0, bins as f64 - 1.0);
            counts[b as usize] += 1;
        }
        let width = 2.0 / bins as f64;
        for (b, &c) in counts.iter().enumerate() {
            let mid = -1.0 + (b as f64 + 0.5) * width;
            let density =
                projected_sphere_logpdf(10, 1, &DVector::from_vec(vec![mid])).unwrap().exp();
            let expected = density * width;
            let emp = c as f64 / n as f64;
            let se = (expected * (1.0 - expected) / n as f64).sqrt();
            assert!(
                (emp - expected).abs() <= 6.0 * se + 0.002,
                "bin {b}: empirical {emp:.4}, expected {expected:.4}"
            );
        }
    }

    #[test]
    fn draws_reproduce_with_seed() {
        let p = StlapParams::new(1.0, 0.1, 1.0).unwrap();
        let run = |seed: u64| {
            let mut rng = RngStream::new(seed);
            let a = p.sample(&mut rng);
            let b = laplace_sample(2.0, &mut rng).unwrap();
            let c = unit_sphere_sample(4, &mut rng).unwrap();
            (a, b, c)
        };
        assert_eq!(run(123), run(123));
    }
}
