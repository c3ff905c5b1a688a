//! Physical system description: particles on discrete sites, the joint
//! configuration basis, detector kernels, constants, and density matrices.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{validation, Error, Result};
use crate::linalg::{hermitian_eigenvalues, CMatrix};

pub type Point3 = [f64; 3];

/// Largest joint configuration count the crate will build.
pub const MAX_CONFIGURATIONS: usize = 4096;

pub fn distance(a: &Point3, b: &Point3) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// Gravitational constant and reduced Planck constant.
///
/// Every rate the crate produces carries a factor `1/hbar`, so the natural
/// profile (`hbar = 1`) and a restored profile differ only by that scaling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalConstants {
    pub g: f64,
    pub hbar: f64,
}

impl PhysicalConstants {
    pub const fn natural() -> Self {
        Self { g: 1.0, hbar: 1.0 }
    }

    /// SI values (m^3 kg^-1 s^-2, J s).
    pub const fn si() -> Self {
        Self { g: 6.674_30e-11, hbar: 1.054_571_817e-34 }
    }

    pub fn new(g: f64, hbar: f64) -> Result<Self> {
        let c = Self { g, hbar };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.g > 0.0 && self.g.is_finite()) {
            return validation(format!("G must be positive and finite, got {}", self.g));
        }
        if !(self.hbar > 0.0 && self.hbar.is_finite()) {
            return validation(format!("hbar must be positive and finite, got {}", self.hbar));
        }
        Ok(())
    }
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        Self::natural()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Particle {
    pub mass: f64,
    pub sites: Vec<Point3>,
}

/// Particles with candidate positions and the Gaussian smearing width.
///
/// `sigma` is the standard deviation of the smearing Gaussian (a length):
/// `g(r) = exp(-|r|^2 / (2 sigma^2)) / (2 pi sigma^2)^{3/2}`. This is the
/// convention under which the Gaussian-Coulomb overlap equals
/// `erf(z / (2 sigma)) / z`; see [`crate::overlaps`].
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleSystem {
    particles: Vec<Particle>,
    sigma: f64,
    strides: Vec<usize>,
    point_offsets: Vec<usize>,
    dim: usize,
}

/// One entry of the joint configuration basis.
#[derive(Debug, Clone, PartialEq)]
pub struct JointConfiguration {
    pub index: usize,
    pub site_indices: Vec<usize>,
    pub positions: Vec<Point3>,
}

impl ParticleSystem {
    pub fn new(particles: Vec<Particle>, sigma: f64) -> Result<Self> {
        if particles.is_empty() {
            return validation("a particle system needs at least one particle");
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return validation(format!("sigma must be positive and finite, got {sigma}"));
        }
        let mut dim: usize = 1;
        for (n, p) in particles.iter().enumerate() {
            if !(p.mass > 0.0 && p.mass.is_finite()) {
                return validation(format!("particle {n}: mass must be positive, got {}", p.mass));
            }
            if p.sites.is_empty() {
                return validation(format!("particle {n} has no sites"));
            }
            if p.sites.iter().flatten().any(|c| !c.is_finite()) {
                return validation(format!("particle {n} has a non-finite site coordinate"));
            }
            dim = dim.checked_mul(p.sites.len()).filter(|&d| d <= MAX_CONFIGURATIONS).ok_or_else(|| {
                Error::Validation(format!("more than {MAX_CONFIGURATIONS} joint configurations"))
            })?;
        }
        if dim < 2 {
            return validation("the joint configuration space must have at least 2 states");
        }
        let mut strides = vec![1; particles.len()];
        for n in (0..particles.len().saturating_sub(1)).rev() {
            strides[n] = strides[n + 1] * particles[n + 1].sites.len();
        }
        let mut point_offsets = Vec::with_capacity(particles.len() + 1);
        let mut acc = 0;
        for p in &particles {
            point_offsets.push(acc);
            acc += p.sites.len();
        }
        point_offsets.push(acc);
        Ok(Self { particles, sigma, strides, point_offsets, dim })
    }

    pub fn particles(&self) -> &[Particle] {
        &self.particles
    }

    pub fn particle_count(&self) -> usize {
        self.particles.len()
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// Number of joint configurations.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Total number of (particle, site) points.
    pub fn point_count(&self) -> usize {
        *self.point_offsets.last().expect("offsets are never empty")
    }

    /// Flat index of the (particle, site) point.
    pub fn point_index(&self, particle: usize, site: usize) -> usize {
        self.point_offsets[particle] + site
    }

    /// (particle, mass, position) for a flat point index.
    pub fn point(&self, index: usize) -> (usize, f64, Point3) {
        let n = self.point_offsets.partition_point(|&o| o <= index) - 1;
        let p = &self.particles[n];
        (n, p.mass, p.sites[index - self.point_offsets[n]])
    }

    /// Mixed-radix digits of a configuration index (particle 0 most significant).
    pub fn site_indices(&self, index: usize) -> Result<Vec<usize>> {
        if index >= self.dim {
            return validation(format!("configuration index {index} out of range (d = {})", self.dim));
        }
        Ok(self
            .strides
            .iter()
            .zip(&self.particles)
            .map(|(&stride, p)| (index / stride) % p.sites.len())
            .collect())
    }

    pub fn configuration_index(&self, site_indices: &[usize]) -> Result<usize> {
        if site_indices.len() != self.particles.len() {
            return validation("one site index per particle is required");
        }
        let mut index = 0;
        for ((&s, &stride), p) in site_indices.iter().zip(&self.strides).zip(&self.particles) {
            if s >= p.sites.len() {
                return validation(format!("site index {s} out of range"));
            }
            index += s * stride;
        }
        Ok(index)
    }

    pub fn configuration(&self, index: usize) -> Result<JointConfiguration> {
        let site_indices = self.site_indices(index)?;
        let positions = site_indices.iter().zip(&self.particles).map(|(&s, p)| p.sites[s]).collect();
        Ok(JointConfiguration { index, site_indices, positions })
    }

    /// Flat point indices occupied in each configuration.
    pub(crate) fn configuration_points(&self) -> Vec<Vec<usize>> {
        (0..self.dim)
            .map(|x| {
                let digits = self.site_indices(x).expect("index in range");
                digits.iter().enumerate().map(|(n, &s)| self.point_index(n, s)).collect()
            })
            .collect()
    }

    /// Centroid and half-extent of the bounding box of all sites.
    pub(crate) fn bounding_box(&self) -> (Point3, f64) {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for p in &self.particles {
            for s in &p.sites {
                for k in 0..3 {
                    lo[k] = lo[k].min(s[k]);
                    hi[k] = hi[k].max(s[k]);
                }
            }
        }
        let center = [0.5 * (lo[0] + hi[0]), 0.5 * (lo[1] + hi[1]), 0.5 * (lo[2] + hi[2])];
        let half = (0..3).map(|k| 0.5 * (hi[k] - lo[k])).fold(0.0, f64::max);
        (center, half)
    }
}

/// Positions of every particle in configuration `index`.
pub fn configuration_positions(system: &ParticleSystem, index: usize) -> Result<Vec<Point3>> {
    Ok(system.configuration(index)?.positions)
}

/// Detector correlator choice.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "lowercase")]
pub enum Kernel {
    /// `gamma * delta(r - s)`.
    Csl { gamma: f64 },
    /// `kappa * G / |r - s|`.
    Dp { kappa: f64 },
}

impl Kernel {
    pub const DP_DEFAULT_KAPPA: f64 = 2.0;

    pub fn dp_default() -> Self {
        Kernel::Dp { kappa: Self::DP_DEFAULT_KAPPA }
    }

    pub fn validate(&self) -> Result<()> {
        let (name, v) = match *self {
            Kernel::Csl { gamma } => ("gamma", gamma),
            Kernel::Dp { kappa } => ("kappa", kappa),
        };
        if !(v > 0.0 && v.is_finite()) {
            return validation(format!("kernel strength {name} must be positive, got {v}"));
        }
        Ok(())
    }

    /// The same kernel with its strength multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        match *self {
            Kernel::Csl { gamma } => Kernel::Csl { gamma: gamma * factor },
            Kernel::Dp { kappa } => Kernel::Dp { kappa: kappa * factor },
        }
    }
}

/// Tolerances applied by the density-matrix validator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateTolerance {
    pub hermiticity: f64,
    pub trace: f64,
    pub min_eigenvalue: f64,
}

impl StateTolerance {
    pub const STRICT: Self = Self { hermiticity: 1e-12, trace: 1e-12, min_eigenvalue: -1e-10 };
    /// Stochastic trajectories are only O(sqrt(dt)) accurate.
    pub const TRAJECTORY: Self = Self { hermiticity: 1e-12, trace: 1e-12, min_eigenvalue: -1e-6 };
}

/// Largest dimension for which the validator diagonalizes to check positivity.
const POSITIVITY_CHECK_MAX_DIM: usize = 256;

/// Checks Hermiticity, unit trace and positivity of a candidate state.
pub fn validate_state(matrix: &CMatrix, tol: &StateTolerance) -> Result<()> {
    let herm = matrix.hermiticity_defect();
    if herm > tol.hermiticity {
        return Err(Error::Numerical(format!("state is not Hermitian (defect {herm:.3e})")));
    }
    let tr = matrix.trace();
    if (tr.re - 1.0).abs() > tol.trace || tr.im.abs() > tol.trace {
        return Err(Error::Numerical(format!("state trace {tr} differs from 1")));
    }
    if matrix.dim() <= POSITIVITY_CHECK_MAX_DIM {
        let min = hermitian_eigenvalues(matrix)?.first().copied().unwrap_or(0.0);
        if min < tol.min_eigenvalue {
            return Err(Error::Numerical(format!("state has eigenvalue {min:.3e} below {:.1e}", tol.min_eigenvalue)));
        }
    }
    Ok(())
}

/// Hermitian, unit-trace, positive semidefinite matrix over the joint
/// configuration basis.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    matrix: CMatrix,
}

impl DensityMatrix {
    pub fn new(matrix: CMatrix) -> Result<Self> {
        Self::with_tolerance(matrix, &StateTolerance::STRICT)
    }

    pub fn with_tolerance(matrix: CMatrix, tol: &StateTolerance) -> Result<Self> {
        validate_state(&matrix, tol)?;
        Ok(Self { matrix })
    }

    /// Pure state from an (unnormalized) amplitude vector.
    pub fn pure(amplitudes: &[Complex64]) -> Result<Self> {
        let norm = amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if !(norm > 0.0) {
            return validation("cannot normalize a zero state vector");
        }
        let psi: Vec<Complex64> = amplitudes.iter().map(|a| a / norm).collect();
        Self::new(CMatrix::outer(&psi))
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix {
        self.matrix
    }

    pub fn get(&self, x: usize, y: usize) -> Complex64 {
        self.matrix[(x, y)]
    }
}

/// The two-mass interferometer geometry: equal masses on the x-axis, particle
/// 1 at `-a/2, +a/2`, particle 2 at `d - a/2, d + a/2`. `a = 0` puts both
/// branches of each particle on the same point.
pub fn bmv_system(m: f64, a: f64, d: f64, sigma: f64) -> Result<ParticleSystem> {
    for (name, v) in [("m", m), ("d", d), ("sigma", sigma)] {
        if !(v > 0.0 && v.is_finite()) {
            return validation(format!("{name} must be positive and finite, got {v}"));
        }
    }
    if !(a >= 0.0 && a.is_finite()) {
        return validation(format!("a must be non-negative and finite, got {a}"));
    }
    let p1 = Particle { mass: m, sites: vec![[-0.5 * a, 0.0, 0.0], [0.5 * a, 0.0, 0.0]] };
    let p2 = Particle { mass: m, sites: vec![[d - 0.5 * a, 0.0, 0.0], [d + 0.5 * a, 0.0, 0.0]] };
    ParticleSystem::new(vec![p1, p2], sigma)
}

/// Uniform product superposition over every joint configuration.
pub fn uniform_product_state(system: &ParticleSystem) -> DensityMatrix {
    let d = system.dim();
    let v = Complex64::new(1.0 / d as f64, 0.0);
    DensityMatrix { matrix: CMatrix::from_fn(d, |_, _| v) }
}

/// BMV system with the initial product state `(|0>+|1>)(|0>+|1>)/2`.
pub fn bmv_scenario(m: f64, a: f64, d: f64, sigma: f64) -> Result<(ParticleSystem, DensityMatrix)> {
    let system = bmv_system(m, a, d, sigma)?;
    let rho = uniform_product_state(&system);
    Ok((system, rho))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn three_particle_system() -> ParticleSystem {
        let sites = |n: usize, off: f64| (0..n).map(|k| [off + k as f64, 0.5 * k as f64, 0.0]).collect();
        ParticleSystem::new(
            vec![
                Particle { mass: 1.0, sites: sites(2, 0.0) },
                Particle { mass: 2.0, sites: sites(3, 5.0) },
                Particle { mass: 0.5, sites: sites(2, -4.0) },
            ],
            0.7,
        )
        .unwrap()
    }

    #[test]
    fn bmv_initial_state_is_uniform() {
        let (system, rho) = bmv_scenario(1.0, 1.0, 3.0, 1.0).unwrap();
        assert_eq!(system.dim(), 4);
        for x in 0..4 {
            for y in 0..4 {
                assert_eq!(rho.get(x, y), Complex64::new(0.25, 0.0));
            }
        }
        assert!((rho.matrix().trace().re - 1.0).abs() < 1e-15);
    }

    #[test]
    fn bmv_rejects_non_positive_inputs() {
        assert!(bmv_scenario(0.0, 1.0, 3.0, 1.0).is_err());
        assert!(bmv_scenario(1.0, -1.0, 3.0, 1.0).is_err());
        assert!(bmv_scenario(1.0, 1.0, 0.0, 1.0).is_err());
        assert!(bmv_scenario(1.0, 1.0, 3.0, f64::NAN).is_err());
    }

    #[test]
    fn lexicographic_extremes() {
        let (system, _) = bmv_scenario(1.0, 1.0, 3.0, 1.0).unwrap();
        let first = configuration_positions(&system, 0).unwrap();
        assert_eq!(first, vec![[-0.5, 0.0, 0.0], [2.5, 0.0, 0.0]]);
        let last = configuration_positions(&system, 3).unwrap();
        assert_eq!(last, vec![[0.5, 0.0, 0.0], [3.5, 0.0, 0.0]]);
        assert!(configuration_positions(&system, 4).is_err());
    }

    #[test]
    fn configuration_map_is_bijective() {
        let system = three_particle_system();
        assert_eq!(system.dim(), 12);
        let mut seen = std::collections::HashSet::new();
        for x in 0..system.dim() {
            let digits = system.site_indices(x).unwrap();
            assert_eq!(system.configuration_index(&digits).unwrap(), x);
            assert!(seen.insert(digits));
        }
        assert_eq!(seen.len(), 12);
    }

    #[test]
    fn point_lookup_matches_offsets() {
        let system = three_particle_system();
        assert_eq!(system.point_count(), 7);
        for n in 0..3 {
            for s in 0..system.particles()[n].sites.len() {
                let (pn, mass, pos) = system.point(system.point_index(n, s));
                assert_eq!(pn, n);
                assert_eq!(mass, system.particles()[n].mass);
                assert_eq!(pos, system.particles()[n].sites[s]);
            }
        }
    }

    #[test]
    fn system_guards() {
        let p = |n: usize| Particle { mass: 1.0, sites: vec![[0.0; 3]; n] };
        assert!(ParticleSystem::new(vec![], 1.0).is_err());
        assert!(ParticleSystem::new(vec![p(1)], 1.0).is_err(), "d = 1 is rejected");
        assert!(ParticleSystem::new(vec![p(2)], 0.0).is_err());
        assert!(ParticleSystem::new(vec![p(2), p(0)], 1.0).is_err());
        assert!(ParticleSystem::new(vec![p(64), p(65)], 1.0).is_err(), "d > 4096 is rejected");
        assert!(ParticleSystem::new(vec![p(64), p(64)], 1.0).is_ok());
    }

    #[test]
    fn validator_flags_bad_states() {
        let bad_trace = CMatrix::identity(2);
        assert!(DensityMatrix::new(bad_trace).is_err());
        let mut neg = CMatrix::zeros(2);
        neg[(0, 0)] = Complex64::new(1.5, 0.0);
        neg[(1, 1)] = Complex64::new(-0.5, 0.0);
        assert!(DensityMatrix::new(neg).is_err());
        let mut nonherm = CMatrix::zeros(2);
        nonherm[(0, 0)] = Complex64::new(0.5, 0.0);
        nonherm[(1, 1)] = Complex64::new(0.5, 0.0);
        nonherm[(0, 1)] = Complex64::new(0.1, 0.0);
        assert!(DensityMatrix::new(nonherm).is_err());
    }

    #[test]
    fn kernel_validation() {
        assert!(Kernel::Dp { kappa: 0.0 }.validate().is_err());
        assert!(Kernel::Csl { gamma: -1.0 }.validate().is_err());
        assert!(Kernel::dp_default().validate().is_ok());
        assert_eq!(Kernel::Dp { kappa: 2.0 }.scaled(1.5), Kernel::Dp { kappa: 3.0 });
    }
}
