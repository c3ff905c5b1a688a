//! Partial transpose and negativity over a particle bipartition, plus the
//! first-order negativity of the two-mass interferometer.

use serde::{Deserialize, Serialize};

use crate::error::{validation, Result};
use crate::linalg::{hermitian_eigenvalues, CMatrix};
use crate::model::{DensityMatrix, ParticleSystem, PhysicalConstants};
use crate::overlaps::ftilde_raw;

/// Split of the particles into a transposed `left` block and its complement.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct Bipartition {
    left: Vec<usize>,
}

impl Bipartition {
    /// `left` lists the particles whose indices get transposed.
    pub fn new(left: Vec<usize>) -> Result<Self> {
        let mut left = left;
        left.sort_unstable();
        left.dedup();
        if left.is_empty() {
            return validation("bipartition needs at least one particle on the left");
        }
        Ok(Self { left })
    }

    /// Particle 0 against the rest.
    pub fn first_particle() -> Self {
        Self { left: vec![0] }
    }

    pub fn left(&self) -> &[usize] {
        &self.left
    }

    /// Complement of `left` in a system of `particle_count` particles.
    pub fn right(&self, particle_count: usize) -> Vec<usize> {
        (0..particle_count).filter(|n| !self.left.contains(n)).collect()
    }

    pub fn validate(&self, system: &ParticleSystem) -> Result<()> {
        let n = system.particle_count();
        if let Some(&bad) = self.left.iter().find(|&&p| p >= n) {
            return validation(format!("bipartition names particle {bad} but the system has {n}"));
        }
        if self.left.len() >= n {
            return validation("bipartition leaves no particle on the right");
        }
        Ok(())
    }
}

impl TryFrom<Vec<usize>> for Bipartition {
    type Error = crate::Error;

    fn try_from(left: Vec<usize>) -> Result<Self> {
        Self::new(left)
    }
}

impl From<Bipartition> for Vec<usize> {
    fn from(b: Bipartition) -> Self {
        b.left
    }
}

/// Transpose of the `left` particles' indices.
pub fn partial_transpose(rho: &CMatrix, system: &ParticleSystem, bipartition: &Bipartition) -> Result<CMatrix> {
    bipartition.validate(system)?;
    let d = system.dim();
    if rho.dim() != d {
        return validation(format!("matrix dimension {} does not match system dimension {d}", rho.dim()));
    }
    let sites: Vec<Vec<usize>> = (0..d).map(|x| system.site_indices(x)).collect::<Result<_>>()?;
    let left = bipartition.left();
    let mut swapped = Vec::with_capacity(system.particle_count());
    let mut out = CMatrix::zeros(d);
    for x in 0..d {
        for y in 0..d {
            // x' takes the left indices of y, y' those of x
            swapped.clone_from(&sites[x]);
            let mut other = sites[y].clone();
            for &p in left {
                swapped[p] = sites[y][p];
                other[p] = sites[x][p];
            }
            let xp = system.configuration_index(&swapped)?;
            let yp = system.configuration_index(&other)?;
            out[(x, y)] = rho[(xp, yp)];
        }
    }
    Ok(out)
}

/// Reduced state of the particles in `keep` (ascending, mixed-radix order as in the full system).
pub fn partial_trace(rho: &CMatrix, system: &ParticleSystem, keep: &[usize]) -> Result<CMatrix> {
    let n = system.particle_count();
    if rho.dim() != system.dim() {
        return validation("matrix dimension does not match the system");
    }
    let mut keep = keep.to_vec();
    keep.sort_unstable();
    keep.dedup();
    if keep.iter().any(|&p| p >= n) {
        return validation("partial trace names a particle outside the system");
    }
    let sizes: Vec<usize> = keep.iter().map(|&p| system.particles()[p].sites.len()).collect();
    let reduced_dim: usize = sizes.iter().product();
    let index = |digits: &[usize]| keep.iter().zip(&sizes).fold(0, |acc, (&p, &s)| acc * s + digits[p]);
    let traced: Vec<usize> = (0..n).filter(|p| !keep.contains(p)).collect();
    let digits: Vec<Vec<usize>> = (0..system.dim()).map(|x| system.site_indices(x)).collect::<Result<_>>()?;
    let mut out = CMatrix::zeros(reduced_dim);
    for x in 0..system.dim() {
        for y in 0..system.dim() {
            if traced.iter().all(|&p| digits[x][p] == digits[y][p]) {
                out[(index(&digits[x]), index(&digits[y]))] += rho[(x, y)];
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum NegativityMethod {
    Eig,
    FirstOrder,
}

#[derive(Debug, Clone, Serialize)]
pub struct NegativityReport {
    pub negativity: f64,
    /// Negative eigenvalues of the partial transpose, ascending.
    pub negative_eigenvalues: Vec<f64>,
    pub method: NegativityMethod,
}

/// Sum of `max(0, -lambda)` over the eigenvalues of the partial transpose.
pub fn negativity(rho: &DensityMatrix, system: &ParticleSystem, bipartition: &Bipartition) -> Result<NegativityReport> {
    matrix_negativity(rho.matrix(), system, bipartition)
}

/// [`negativity`] for a Hermitian matrix that need not be a valid state.
pub fn matrix_negativity(rho: &CMatrix, system: &ParticleSystem, bipartition: &Bipartition) -> Result<NegativityReport> {
    let pt = partial_transpose(rho, system, bipartition)?;
    let values = hermitian_eigenvalues(&pt)?;
    let negative_eigenvalues: Vec<f64> = values.into_iter().filter(|&v| v < 0.0).collect();
    let negativity = -negative_eigenvalues.iter().sum::<f64>();
    Ok(NegativityReport { negativity, negative_eigenvalues, method: NegativityMethod::Eig })
}

/// First-order coefficients for the two-mass interferometer under DP
/// monitoring at `kappa = 2`, with sites at `±a/2` and `d ± a/2`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct FirstOrderPq {
    pub p: f64,
    pub q: f64,
    /// `max(0, p) + max(0, q)`.
    pub negativity: f64,
    /// Large-sigma form
    /// `(G m^2 dt / 4 hbar) {[f(a) - f(0)] + [f(d) + f(2a + d) - 2 f(d + a)] / 2}`.
    pub negativity_large_sigma: f64,
}

impl FirstOrderPq {
    pub fn report(&self) -> NegativityReport {
        let negative_eigenvalues = [-self.p, -self.q].into_iter().filter(|&v| v < 0.0).collect();
        NegativityReport { negativity: self.negativity, negative_eigenvalues, method: NegativityMethod::FirstOrder }
    }
}

pub fn first_order_pq(m: f64, a: f64, d: f64, sigma: f64, dt: f64, constants: &PhysicalConstants) -> Result<FirstOrderPq> {
    constants.validate()?;
    for (name, v, strict) in [("m", m, true), ("a", a, false), ("d", d, false), ("sigma", sigma, true), ("dt", dt, false)] {
        let ok = v.is_finite() && if strict { v > 0.0 } else { v >= 0.0 };
        if !ok {
            return validation(format!("{name} out of range: {v}"));
        }
    }
    let f = |z: f64| ftilde_raw(z, sigma);
    let pref = constants.g * m * m * dt / (8.0 * constants.hbar);
    // Grouped as differences so coincident branches cancel exactly.
    let (f0, fa, fd, fad, f2ad) = (f(0.0), f(a), f(d), f(a + d), f(2.0 * a + d));
    let p = pref * (2.0 * (fa - f0) + (fd - fad) + (f2ad - fad));
    let q = pref * (2.0 * (fa - f0) + (fad - fd) + (fad - f2ad));
    let large = 2.0 * pref * ((fa - f0) + 0.5 * ((fd - fad) + (f2ad - fad)));
    Ok(FirstOrderPq { p, q, negativity: p.max(0.0) + q.max(0.0), negativity_large_sigma: large })
}
