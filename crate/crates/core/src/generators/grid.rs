//! Spatial-grid oracle for the DP dephasing rates.
//!
//! The smeared densities are discretized as cell masses on a cubic grid and
//! the Coulomb double integral is evaluated as a discrete quadratic form
//! `sum_{r,s} Δ(r) K(r - s) Δ(s)`, with the convolution done by a
//! zero-padded FFT. Nothing here uses the erf closed form.

use std::f64::consts::SQRT_2;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::Serialize;

use crate::error::{validation, Result};
use crate::linalg::RMatrix;
use crate::model::{Kernel, ParticleSystem, PhysicalConstants};

/// Mean of `1/|r - s|` for `r`, `s` uniform in the unit cube.
const CUBE_SELF_COULOMB: f64 = 1.882_312_645_7;

/// Half-width of the box beyond the sites, in units of sigma.
const BOX_MARGIN_SIGMAS: f64 = 6.0;

pub const GRID_MIN_CELLS: usize = 24;

struct Fft3 {
    n: usize,
    fwd: Arc<dyn Fft<f64>>,
}

impl Fft3 {
    fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self { n, fwd: planner.plan_fft_forward(n) }
    }

    /// In-place forward 3D transform of an `n^3` row-major array.
    fn forward(&self, data: &mut [Complex64]) {
        let n = self.n;
        // innermost axis is contiguous
        for line in data.chunks_mut(n) {
            self.fwd.process(line);
        }
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        for i in 0..n {
            for k in 0..n {
                for j in 0..n {
                    buf[j] = data[(i * n + j) * n + k];
                }
                self.fwd.process(&mut buf);
                for j in 0..n {
                    data[(i * n + j) * n + k] = buf[j];
                }
            }
        }
        for j in 0..n {
            for k in 0..n {
                for i in 0..n {
                    buf[i] = data[(i * n + j) * n + k];
                }
                self.fwd.process(&mut buf);
                for i in 0..n {
                    data[(i * n + j) * n + k] = buf[i];
                }
            }
        }
    }
}

/// Grid geometry: `cells` per axis of width `h`, lower corner `origin`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct GridSpec {
    pub cells: usize,
    pub h: f64,
    pub origin: [f64; 3],
}

impl GridSpec {
    /// Cubic box of side `12 sigma` plus the extent of the sites, centred on
    /// the sites' bounding box.
    pub fn covering(system: &ParticleSystem, cells: usize) -> Self {
        let (center, half) = system.bounding_box();
        let side = 2.0 * (half + BOX_MARGIN_SIGMAS * system.sigma());
        let h = side / cells as f64;
        let origin = [center[0] - 0.5 * side, center[1] - 0.5 * side, center[2] - 0.5 * side];
        Self { cells, h, origin }
    }
}

/// Mass of a unit Gaussian (std `sigma`, centre `mu`) inside each cell along one axis.
fn axis_masses(spec: &GridSpec, axis: usize, mu: f64, sigma: f64) -> Vec<f64> {
    let scale = 1.0 / (SQRT_2 * sigma);
    let edge = |i: usize| libm::erf((spec.origin[axis] + i as f64 * spec.h - mu) * scale);
    (0..spec.cells).map(|i| 0.5 * (edge(i + 1) - edge(i))).collect()
}

/// Cell masses of the smeared density of configuration `x`.
fn configuration_density(system: &ParticleSystem, spec: &GridSpec, x: usize) -> Vec<f64> {
    let n = spec.cells;
    let conf = system.configuration(x).expect("index in range");
    let mut rho = vec![0.0; n * n * n];
    for (p, pos) in system.particles().iter().zip(&conf.positions) {
        let mx = axis_masses(spec, 0, pos[0], system.sigma());
        let my = axis_masses(spec, 1, pos[1], system.sigma());
        let mz = axis_masses(spec, 2, pos[2], system.sigma());
        for i in 0..n {
            for j in 0..n {
                let w = p.mass * mx[i] * my[j];
                let row = &mut rho[(i * n + j) * n..(i * n + j + 1) * n];
                for (k, cell) in row.iter_mut().enumerate() {
                    *cell += w * mz[k];
                }
            }
        }
    }
    rho
}

/// FFT of the padded Coulomb kernel on a `(2n)^3` periodic grid.
fn kernel_spectrum(fft: &Fft3, h: f64) -> Vec<Complex64> {
    let m = fft.n;
    let half = m / 2;
    let wrap = |i: usize| if i <= half { i as f64 } else { i as f64 - m as f64 };
    let mut k = vec![Complex64::new(0.0, 0.0); m * m * m];
    for i in 0..m {
        for j in 0..m {
            for l in 0..m {
                let r = (wrap(i).powi(2) + wrap(j).powi(2) + wrap(l).powi(2)).sqrt();
                let v = if r == 0.0 { CUBE_SELF_COULOMB / h } else { 1.0 / (r * h) };
                k[(i * m + j) * m + l] = Complex64::new(v, 0.0);
            }
        }
    }
    fft.forward(&mut k);
    k
}

/// Grid evaluation of `Gamma_xy = (kappa G / 8 hbar) \int\int Δ(r) Δ(s) / |r - s|`
/// with `Δ = rho_x - rho_y`.
pub fn grid_dephasing(system: &ParticleSystem, kernel: &Kernel, constants: &PhysicalConstants, cells: usize) -> Result<RMatrix> {
    let kappa = match *kernel {
        Kernel::Dp { kappa } => kappa,
        Kernel::Csl { .. } => return validation("the grid oracle covers the DP Coulomb kernel only"),
    };
    kernel.validate()?;
    constants.validate()?;
    if cells < 4 {
        return validation("grid needs at least 4 cells per axis");
    }
    let spec = GridSpec::covering(system, cells);
    let n = spec.cells;
    let m = 2 * n;
    let fft = Fft3::new(m);
    let kspec = kernel_spectrum(&fft, spec.h);
    let densities: Vec<Vec<f64>> = (0..system.dim()).map(|x| configuration_density(system, &spec, x)).collect();

    let d = system.dim();
    let pref = kappa * constants.g / (8.0 * constants.hbar);
    let total = (m * m * m) as f64;
    let mut gamma = RMatrix::zeros(d, d);
    let mut padded = vec![Complex64::new(0.0, 0.0); m * m * m];
    for x in 0..d {
        for y in (x + 1)..d {
            padded.iter_mut().for_each(|v| *v = Complex64::new(0.0, 0.0));
            for i in 0..n {
                for j in 0..n {
                    for l in 0..n {
                        let src = (i * n + j) * n + l;
                        padded[(i * m + j) * m + l] = Complex64::new(densities[x][src] - densities[y][src], 0.0);
                    }
                }
            }
            fft.forward(&mut padded);
            // Parseval: sum_r Δ (K * Δ) = (1/N) sum_k K^(k) |Δ^(k)|^2
            let energy: f64 = padded.iter().zip(&kspec).map(|(a, k)| k.re * a.norm_sqr()).sum::<f64>() / total;
            gamma[(x, y)] = pref * energy;
            gamma[(y, x)] = pref * energy;
        }
    }
    Ok(gamma)
}

#[derive(Debug, Clone, Serialize)]
pub struct GridRefinement {
    /// Cells per axis at each refinement level.
    pub levels: Vec<usize>,
    pub gamma: RMatrix,
    /// Relative change (max over pairs, scaled by max |Gamma|) at the last doubling.
    pub last_change: f64,
    pub converged: bool,
}

/// Start at `start_cells` per axis and double until the rates change by less
/// than `rel_change`, or until `max_cells` is reached.
pub fn refine_grid_dephasing(
    system: &ParticleSystem,
    kernel: &Kernel,
    constants: &PhysicalConstants,
    start_cells: usize,
    max_cells: usize,
    rel_change: f64,
) -> Result<GridRefinement> {
    let mut cells = start_cells.max(GRID_MIN_CELLS);
    let mut prev = grid_dephasing(system, kernel, constants, cells)?;
    let mut levels = vec![cells];
    let mut last_change = f64::INFINITY;
    while cells * 2 <= max_cells {
        cells *= 2;
        let next = grid_dephasing(system, kernel, constants, cells)?;
        last_change = next.max_abs_diff(&prev) / next.max_abs().max(f64::MIN_POSITIVE);
        levels.push(cells);
        prev = next;
        if last_change < rel_change {
            break;
        }
    }
    Ok(GridRefinement { levels, gamma: prev, converged: last_change < rel_change, last_change })
}

/// Max over pairs of |a - b| / max |b|.
pub fn relative_table_error(a: &RMatrix, b: &RMatrix) -> f64 {
    a.max_abs_diff(b) / b.max_abs().max(f64::MIN_POSITIVE)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::dephasing_rates;
    use crate::model::{bmv_system, Particle};

    #[test]
    fn bmv_grid_matches_closed_form() {
        let system = bmv_system(1.0, 1.0, 3.0, 1.0).unwrap();
        let k = PhysicalConstants::natural();
        let closed = dephasing_rates(&system, &Kernel::dp_default(), &k).unwrap();
        let refined = refine_grid_dephasing(&system, &Kernel::dp_default(), &k, 24, 96, 0.005).unwrap();
        let err = relative_table_error(&refined.gamma, &closed);
        assert!(err < 0.02, "grid error {err}, levels {:?}", refined.levels);
    }

    #[test]
    fn random_pair_grid_matches_closed_form() {
        let system = ParticleSystem::new(
            vec![
                Particle { mass: 1.2, sites: vec![[0.0, 0.3, -0.2], [0.9, -0.4, 0.1]] },
                Particle { mass: 0.8, sites: vec![[2.2, 0.5, 0.0], [1.7, -0.6, 0.7]] },
            ],
            0.8,
        )
        .unwrap();
        let k = PhysicalConstants::natural();
        let kernel = Kernel::Dp { kappa: 1.3 };
        let closed = dephasing_rates(&system, &kernel, &k).unwrap();
        let refined = refine_grid_dephasing(&system, &kernel, &k, 24, 96, 0.005).unwrap();
        assert!(relative_table_error(&refined.gamma, &closed) < 0.02);
    }

    #[test]
    fn csl_kernel_rejected() {
        let system = bmv_system(1.0, 1.0, 3.0, 1.0).unwrap();
        assert!(grid_dephasing(&system, &Kernel::Csl { gamma: 1.0 }, &PhysicalConstants::natural(), 8).is_err());
    }
}
