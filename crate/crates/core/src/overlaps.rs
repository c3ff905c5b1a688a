//! Gaussian-Coulomb and Gaussian-Gaussian overlap integrals.
//!
//! Every generator in the crate reduces to two overlaps between smeared
//! point masses of width `sigma` (standard deviation):
//!
//! * `f~(z) = \int\int g(r - x_i) g(s - x_j) / |r - s| dr ds = erf(z / (2 sigma)) / z`,
//!   with the continuous value `1 / (sigma sqrt(pi))` at `z = 0`;
//! * `\int g(r - x_i) g(r - x_j) dr = exp(-z^2 / (4 sigma^2)) / (4 pi sigma^2)^{3/2}`.
//!
//! Both have independent numerical oracles here (Monte Carlo for the
//! Coulomb overlap, tensor quadrature for the Gaussian one).

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{validation, Result};
use crate::model::{distance, ParticleSystem, Point3};
use crate::linalg::RMatrix;

/// Separations below `ZERO_SEPARATION * sigma` use the `z = 0` branch.
pub const ZERO_SEPARATION: f64 = 1e-12;

/// `f~(z)` without input checks; callers guarantee `z >= 0`, `sigma > 0`.
#[inline]
pub(crate) fn ftilde_raw(z: f64, sigma: f64) -> f64 {
    if z < ZERO_SEPARATION * sigma {
        1.0 / (sigma * PI.sqrt())
    } else {
        libm::erf(z / (2.0 * sigma)) / z
    }
}

/// Smeared Coulomb overlap `erf(z / (2 sigma)) / z` (or `1/(sigma sqrt(pi))` at 0).
pub fn ftilde(z: f64, sigma: f64) -> Result<f64> {
    if !(z >= 0.0) || !z.is_finite() {
        return validation(format!("separation must be a finite non-negative length, got {z}"));
    }
    if !(sigma > 0.0) || !sigma.is_finite() {
        return validation(format!("sigma must be positive, got {sigma}"));
    }
    Ok(ftilde_raw(z, sigma))
}

#[inline]
pub(crate) fn gaussian_overlap_raw(z: f64, sigma: f64) -> f64 {
    let s2 = sigma * sigma;
    (-z * z / (4.0 * s2)).exp() / (4.0 * PI * s2).powf(1.5)
}

/// Closed-form `\int g(r - x_i) g(r - x_j) dr`.
pub fn gaussian_overlap(x_i: &Point3, x_j: &Point3, sigma: f64) -> Result<f64> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return validation(format!("sigma must be positive, got {sigma}"));
    }
    Ok(gaussian_overlap_raw(distance(x_i, x_j), sigma))
}

/// Normalized isotropic Gaussian with standard deviation `sigma`.
pub fn gaussian_density(r: &Point3, center: &Point3, sigma: f64) -> f64 {
    let s2 = sigma * sigma;
    let d2 = (r[0] - center[0]).powi(2) + (r[1] - center[1]).powi(2) + (r[2] - center[2]).powi(2);
    (-d2 / (2.0 * s2)).exp() / (2.0 * PI * s2).powf(1.5)
}

/// 3D composite Simpson quadrature of the Gaussian overlap integral on a box
/// covering both centres with `8 sigma` margins. `points_per_axis` is rounded
/// up to an odd count.
pub fn gaussian_overlap_quadrature(x_i: &Point3, x_j: &Point3, sigma: f64, points_per_axis: usize) -> Result<f64> {
    if !(sigma > 0.0) {
        return validation("sigma must be positive");
    }
    if points_per_axis < 5 {
        return validation("quadrature needs at least 5 points per axis");
    }
    let n = points_per_axis | 1;
    let margin = 8.0 * sigma;
    let axes: Vec<(f64, f64)> = (0..3)
        .map(|k| (x_i[k].min(x_j[k]) - margin, x_i[k].max(x_j[k]) + margin))
        .collect();
    let weights: Vec<f64> = (0..n)
        .map(|i| if i == 0 || i == n - 1 { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 })
        .collect();
    let grid = |k: usize, i: usize| axes[k].0 + (axes[k].1 - axes[k].0) * i as f64 / (n - 1) as f64;
    let h: Vec<f64> = (0..3).map(|k| (axes[k].1 - axes[k].0) / (n - 1) as f64).collect();
    let total: f64 = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut acc = 0.0;
            for j in 0..n {
                for k in 0..n {
                    let r = [grid(0, i), grid(1, j), grid(2, k)];
                    acc += weights[j] * weights[k] * gaussian_density(&r, x_i, sigma) * gaussian_density(&r, x_j, sigma);
                }
            }
            weights[i] * acc
        })
        .collect::<Vec<_>>()
        .iter()
        .sum();
    Ok(total * h[0] * h[1] * h[2] / 27.0)
}

/// Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OracleEstimate {
    pub estimate: f64,
    pub std_error: f64,
    pub samples: usize,
}

impl OracleEstimate {
    /// |estimate - value| measured in standard errors.
    pub fn z_score(&self, value: f64) -> f64 {
        (self.estimate - value).abs() / self.std_error
    }
}

pub const ORACLE_MIN_SAMPLES: usize = 1_000;
pub const ORACLE_DEFAULT_SAMPLES: usize = 1_000_000;
/// Fixed chunking keeps the reduction order independent of the thread count.
const ORACLE_CHUNKS: usize = 64;

/// Importance-sampled Monte Carlo of the defining 6D integral
/// `\int\int g(r - x_i) g(s - x_j) / |r - s| dr ds`, drawing `r` and `s`
/// from the two Gaussians (standard deviation `sampling_std`) so the
/// integrand reduces to `E[1 / |r - s|]`.
pub fn coulomb_overlap_oracle(
    x_i: &Point3,
    x_j: &Point3,
    sampling_std: f64,
    samples: usize,
    seed: u64,
) -> Result<OracleEstimate> {
    if samples < ORACLE_MIN_SAMPLES {
        return validation(format!("oracle needs at least {ORACLE_MIN_SAMPLES} samples, got {samples}"));
    }
    if !(sampling_std > 0.0) {
        return validation("sampling standard deviation must be positive");
    }
    let per_chunk = samples.div_ceil(ORACLE_CHUNKS);
    let partials: Vec<(f64, f64, usize)> = (0..ORACLE_CHUNKS)
        .into_par_iter()
        .map(|chunk| {
            let start = chunk * per_chunk;
            let count = per_chunk.min(samples.saturating_sub(start));
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(chunk as u64);
            let mut sum = 0.0;
            let mut sum_sq = 0.0;
            for _ in 0..count {
                let mut d2 = 0.0;
                for k in 0..3 {
                    let a: f64 = StandardNormal.sample(&mut rng);
                    let b: f64 = StandardNormal.sample(&mut rng);
                    let diff = (x_i[k] + sampling_std * a) - (x_j[k] + sampling_std * b);
                    d2 += diff * diff;
                }
                let v = 1.0 / d2.sqrt();
                sum += v;
                sum_sq += v * v;
            }
            (sum, sum_sq, count)
        })
        .collect();
    let (sum, sum_sq, n) = partials.iter().fold((0.0, 0.0, 0usize), |acc, p| (acc.0 + p.0, acc.1 + p.1, acc.2 + p.2));
    let nf = n as f64;
    let mean = sum / nf;
    let var = (sum_sq / nf - mean * mean).max(0.0) * nf / (nf - 1.0);
    Ok(OracleEstimate { estimate: mean, std_error: (var / nf).sqrt(), samples: n })
}

/// How the user-facing smearing parameter maps to the Gaussian's width.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SigmaConvention {
    /// `sigma` is the standard deviation (a length).
    StdDev,
    /// `sigma` is the variance (a squared length), as in `exp(-r^2/(2 sigma))`.
    Variance,
}

impl SigmaConvention {
    pub fn sampling_std(self, sigma: f64) -> f64 {
        match self {
            SigmaConvention::StdDev => sigma,
            SigmaConvention::Variance => sigma.sqrt(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ConventionRow {
    pub z: f64,
    pub closed_form: f64,
    pub std_dev: OracleEstimate,
    pub variance: OracleEstimate,
}

/// Which reading of `sigma` makes `erf(z/(2 sigma))/z` the value of the
/// defining integral.
#[derive(Debug, Clone, Serialize)]
pub struct ConventionReport {
    pub sigma: f64,
    pub rows: Vec<ConventionRow>,
    /// Worst relative error of the closed form under each convention.
    pub std_dev_max_rel_error: f64,
    pub variance_max_rel_error: f64,
    pub adopted: SigmaConvention,
}

/// Evaluate the oracle under both conventions at the given separations.
/// Use `sigma != 1` to make the conventions distinguishable.
pub fn resolve_sigma_convention(sigma: f64, separations: &[f64], samples: usize, seed: u64) -> Result<ConventionReport> {
    let mut rows = Vec::with_capacity(separations.len());
    let (mut e_std, mut e_var) = (0.0f64, 0.0f64);
    for (k, &z) in separations.iter().enumerate() {
        let closed = ftilde(z, sigma)?;
        let a = [0.0; 3];
        let b = [z, 0.0, 0.0];
        let std_dev = coulomb_overlap_oracle(&a, &b, SigmaConvention::StdDev.sampling_std(sigma), samples, seed ^ (2 * k as u64))?;
        let variance =
            coulomb_overlap_oracle(&a, &b, SigmaConvention::Variance.sampling_std(sigma), samples, seed ^ (2 * k as u64 + 1))?;
        e_std = e_std.max((std_dev.estimate - closed).abs() / closed);
        e_var = e_var.max((variance.estimate - closed).abs() / closed);
        rows.push(ConventionRow { z, closed_form: closed, std_dev, variance });
    }
    let adopted = if e_std <= e_var { SigmaConvention::StdDev } else { SigmaConvention::Variance };
    Ok(ConventionReport { sigma, rows, std_dev_max_rel_error: e_std, variance_max_rel_error: e_var, adopted })
}

/// Pairwise overlaps between every (particle, site) point of a system.
#[derive(Debug, Clone)]
pub struct OverlapTable {
    pub ftilde: RMatrix,
    pub gauss_overlap: RMatrix,
}

impl OverlapTable {
    pub fn build(system: &ParticleSystem) -> Self {
        let n = system.point_count();
        let sigma = system.sigma();
        let pos: Vec<Point3> = (0..n).map(|p| system.point(p).2).collect();
        let ftilde = RMatrix::from_fn(n, n, |i, j| ftilde_raw(distance(&pos[i], &pos[j]), sigma));
        let gauss_overlap = RMatrix::from_fn(n, n, |i, j| gaussian_overlap_raw(distance(&pos[i], &pos[j]), sigma));
        Self { ftilde, gauss_overlap }
    }
}

/// Small-separation behaviour of `f~` on a grid.
#[derive(Debug, Clone, Serialize)]
pub struct TaylorReport {
    pub sigma: f64,
    pub all_positive: bool,
    /// Smallest second difference `f(z+h) - 2 f(z) + f(z-h)` on the grid.
    pub min_second_difference: f64,
    pub convex_on_grid: bool,
    /// Least-squares coefficient of `z^2` in `f~(z) - f~(0)` (with a `z^4` term).
    pub fitted_quadratic: f64,
    /// Magnitude `1 / (12 sqrt(pi) sigma^3)` of the expected quadratic term.
    pub reference_magnitude: f64,
    pub magnitude_rel_error: f64,
    /// Sign of the fitted coefficient: -1, 0 or +1.
    pub fitted_sign: i8,
}

/// Fit the quadratic coefficient of `f~` about zero on a uniform small-`z`
/// grid and report positivity and discrete convexity as found.
pub fn ftilde_taylor_check(sigma: f64, z_grid: &[f64]) -> Result<TaylorReport> {
    if z_grid.len() < 3 {
        return validation("Taylor check needs at least 3 grid points");
    }
    let zmax = z_grid.iter().cloned().fold(0.0, f64::max);
    if zmax > sigma / 10.0 + 1e-15 {
        return validation(format!("grid reaches z = {zmax}, beyond sigma/10 = {}", sigma / 10.0));
    }
    let f0 = ftilde(0.0, sigma)?;
    let values: Vec<f64> = z_grid.iter().map(|&z| ftilde(z, sigma)).collect::<Result<_>>()?;
    let all_positive = values.iter().all(|&v| v > 0.0);
    let min_second_difference = values
        .windows(3)
        .map(|w| w[0] - 2.0 * w[1] + w[2])
        .fold(f64::INFINITY, f64::min);

    // Normal equations for y = c2 z^2 + c4 z^4 in scaled variables u = z/sigma.
    let (mut s44, mut s46, mut s66, mut t2, mut t4) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (&z, &v) in z_grid.iter().zip(&values) {
        let u = z / sigma;
        let y = (v - f0) * sigma;
        let (a, b) = (u * u, u.powi(4));
        s44 += a * a;
        s46 += a * b;
        s66 += b * b;
        t2 += a * y;
        t4 += b * y;
    }
    let det = s44 * s66 - s46 * s46;
    let c2_scaled = if det.abs() > 1e-300 { (t2 * s66 - t4 * s46) / det } else { t2 / s44 };
    let fitted_quadratic = c2_scaled / sigma.powi(3);
    let reference_magnitude = 1.0 / (12.0 * PI.sqrt() * sigma.powi(3));
    let fitted_sign = if fitted_quadratic > 0.0 { 1 } else if fitted_quadratic < 0.0 { -1 } else { 0 };
    Ok(TaylorReport {
        sigma,
        all_positive,
        min_second_difference,
        convex_on_grid: min_second_difference >= -1e-12,
        fitted_quadratic,
        reference_magnitude,
        magnitude_rel_error: (fitted_quadratic.abs() - reference_magnitude).abs() / reference_magnitude,
        fitted_sign,
    })
}
