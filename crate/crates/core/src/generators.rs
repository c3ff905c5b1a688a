//! Generator tables over pairs of joint configurations.
//!
//! Every smeared density operator is diagonal in the configuration basis,
//! so the averaged dynamics act elementwise on `rho_xy`:
//!
//! ```text
//! d rho_xy / dt = -(Gamma_xy + i Theta_xy) rho_xy
//! ```
//!
//! `Gamma` collects the double-commutator dissipators, `Theta` the phase
//! from the effective pair potential, and `C` the covariance per unit time
//! of the per-configuration measurement noise.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{hermitian_eigenvalues, RMatrix};
use crate::model::{distance, Kernel, ParticleSystem, PhysicalConstants};
use crate::overlaps::{ftilde_raw, gaussian_overlap_raw};

pub mod grid;

/// Which dynamics a [`GeneratorTables`] describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum GeneratorTag {
    /// DP-kernel monitoring dissipator only.
    MonitoringOnly,
    /// DP monitoring plus averaged gravitational feedback at `kappa = 2`.
    DpFull,
    /// CSL-kernel monitoring dissipator only.
    CslMonitoring,
    /// DP monitoring plus averaged feedback at a general `kappa`.
    FeedbackAveraged,
}

#[derive(Debug, Clone)]
pub struct GeneratorTables {
    pub tag: GeneratorTag,
    /// Kernel of the monitoring process that the noise covariance describes.
    pub kernel: Kernel,
    pub constants: PhysicalConstants,
    pub system: ParticleSystem,
    /// Dephasing rates (1/time).
    pub gamma: RMatrix,
    /// Phase rates `(V_x - V_y) / hbar` (1/time).
    pub theta: RMatrix,
    /// Monitoring noise covariance per unit time over configurations.
    pub c: RMatrix,
    /// The same covariance over individual (particle, site) points;
    /// `c = A point_covariance A^T` with `A` the occupation incidence.
    pub point_covariance: RMatrix,
}

impl GeneratorTables {
    pub fn dim(&self) -> usize {
        self.gamma.rows()
    }

    pub fn gamma_max(&self) -> f64 {
        self.gamma.max_abs()
    }

    pub fn theta_max(&self) -> f64 {
        self.theta.max_abs()
    }

    /// Largest rate in the generator; sets the natural time step.
    pub fn rate_scale(&self) -> f64 {
        self.gamma_max().max(self.theta_max())
    }

    /// Check the structural invariants (symmetry, zero diagonal, signs, PSD `C`).
    pub fn check_invariants(&self) -> Result<()> {
        let d = self.dim();
        let gscale = self.gamma_max().max(f64::MIN_POSITIVE);
        let tscale = self.theta_max().max(f64::MIN_POSITIVE);
        for x in 0..d {
            if self.gamma[(x, x)] != 0.0 || self.theta[(x, x)] != 0.0 {
                return Err(Error::Model(format!("nonzero diagonal rate at configuration {x}")));
            }
            for y in 0..d {
                if (self.gamma[(x, y)] - self.gamma[(y, x)]).abs() > 1e-14 * gscale {
                    return Err(Error::Model("dephasing matrix is not symmetric".into()));
                }
                if self.gamma[(x, y)] < -1e-14 * gscale.max(1.0) {
                    return Err(Error::Model(format!("negative dephasing rate {}", self.gamma[(x, y)])));
                }
                if (self.theta[(x, y)] + self.theta[(y, x)]).abs() > 1e-14 * tscale {
                    return Err(Error::Model("phase matrix is not antisymmetric".into()));
                }
            }
        }
        check_psd(&self.c, "noise covariance")
    }
}

fn coupling(constants: &PhysicalConstants) -> f64 {
    constants.g / constants.hbar
}

/// Per-point kernel value `K_pq` such that the covariance over points is
/// `B_pq = prefactor * m_p m_q K_pq`.
fn point_kernel_value(kernel: &Kernel, z: f64, sigma: f64) -> f64 {
    match kernel {
        Kernel::Dp { .. } => ftilde_raw(z, sigma),
        Kernel::Csl { .. } => gaussian_overlap_raw(z, sigma),
    }
}

/// Strength multiplying the smeared kernel, per unit `hbar`:
/// `kappa G / hbar` for DP, `gamma / hbar` for CSL.
fn kernel_strength(kernel: &Kernel, constants: &PhysicalConstants) -> f64 {
    match *kernel {
        Kernel::Dp { kappa } => kappa * coupling(constants),
        Kernel::Csl { gamma } => gamma / constants.hbar,
    }
}

fn validate_inputs(kernel: &Kernel, constants: &PhysicalConstants) -> Result<()> {
    kernel.validate()?;
    constants.validate()
}

/// Sum over particle pairs `sum_{n,m} m_n m_m K(|x_n - y_m|)` for two configurations.
fn pair_sum(system: &ParticleSystem, kernel: &Kernel, x: &[[f64; 3]], y: &[[f64; 3]]) -> f64 {
    let sigma = system.sigma();
    let masses = system.particles().iter().map(|p| p.mass);
    let mut acc = 0.0;
    for (n, mn) in masses.clone().enumerate() {
        for (m, mm) in masses.clone().enumerate() {
            acc += mn * mm * point_kernel_value(kernel, distance(&x[n], &y[m]), sigma);
        }
    }
    acc
}

fn positions(system: &ParticleSystem) -> Vec<Vec<[f64; 3]>> {
    (0..system.dim())
        .map(|x| system.configuration(x).expect("index in range").positions)
        .collect()
}

/// `S_xy = sum_{n,m} m_n m_m [K(x_n,x_m) + K(y_n,y_m) - 2 K(x_n,y_m)]`.
fn dephasing_structure(system: &ParticleSystem, kernel: &Kernel) -> RMatrix {
    let pos = positions(system);
    let d = system.dim();
    let self_terms: Vec<f64> = pos.iter().map(|p| pair_sum(system, kernel, p, p)).collect();
    let mut s = RMatrix::zeros(d, d);
    for x in 0..d {
        for y in (x + 1)..d {
            let v = self_terms[x] + self_terms[y] - 2.0 * pair_sum(system, kernel, &pos[x], &pos[y]);
            s[(x, y)] = v;
            s[(y, x)] = v;
        }
    }
    s
}

/// Dephasing rates of the monitoring dissipator,
/// `Gamma_xy = (1/8) \int\int gamma_rs [rho_x(r) - rho_y(r)][rho_x(s) - rho_y(s)]`.
pub fn dephasing_rates(system: &ParticleSystem, kernel: &Kernel, constants: &PhysicalConstants) -> Result<RMatrix> {
    validate_inputs(kernel, constants)?;
    Ok(dephasing_structure(system, kernel).scaled(kernel_strength(kernel, constants) / 8.0))
}

/// Covariance of the monitoring noise over (particle, site) points.
pub fn point_covariance(system: &ParticleSystem, kernel: &Kernel, constants: &PhysicalConstants) -> Result<RMatrix> {
    validate_inputs(kernel, constants)?;
    let n = system.point_count();
    let sigma = system.sigma();
    let pts: Vec<_> = (0..n).map(|p| system.point(p)).collect();
    let pref = kernel_strength(kernel, constants) / 4.0;
    let b = RMatrix::from_fn(n, n, |p, q| {
        pref * pts[p].1 * pts[q].1 * point_kernel_value(kernel, distance(&pts[p].2, &pts[q].2), sigma)
    });
    check_psd(&b, "point covariance")?;
    Ok(b)
}

/// `C_xy = (1/4) \int\int gamma_rs rho_x(r) rho_y(s) dr ds`, assembled from
/// the point covariance.
pub fn noise_covariance(system: &ParticleSystem, kernel: &Kernel, constants: &PhysicalConstants) -> Result<RMatrix> {
    let b = point_covariance(system, kernel, constants)?;
    let c = contract_points(system, &b);
    check_psd(&c, "noise covariance")?;
    Ok(c)
}

/// `A B A^T` where `A` maps configurations to their occupied points.
pub(crate) fn contract_points(system: &ParticleSystem, b: &RMatrix) -> RMatrix {
    let occ = system.configuration_points();
    let d = system.dim();
    let mut c = RMatrix::zeros(d, d);
    for x in 0..d {
        for y in x..d {
            let mut acc = 0.0;
            for &p in &occ[x] {
                for &q in &occ[y] {
                    acc += b[(p, q)];
                }
            }
            c[(x, y)] = acc;
            c[(y, x)] = acc;
        }
    }
    c
}

/// Largest dimension checked by full diagonalization.
const PSD_CHECK_MAX_DIM: usize = 512;

fn check_psd(m: &RMatrix, what: &str) -> Result<()> {
    if m.rows() > PSD_CHECK_MAX_DIM {
        return Ok(());
    }
    let scale = m.max_abs();
    let min = hermitian_eigenvalues(&m.to_complex())?.first().copied().unwrap_or(0.0);
    if min < -1e-10 * scale {
        return Err(Error::Model(format!("{what} is not positive semidefinite (min eigenvalue {min:.3e})")));
    }
    Ok(())
}

/// `(C_xx + C_yy - 2 C_xy) / 2`.
pub fn dephasing_from_covariance(c: &RMatrix) -> RMatrix {
    let d = c.rows();
    RMatrix::from_fn(d, d, |x, y| if x == y { 0.0 } else { 0.5 * (c[(x, x)] + c[(y, y)] - 2.0 * c[(x, y)]) })
}

/// Max |Gamma - (C_xx + C_yy - 2 C_xy)/2| relative to max |Gamma|.
pub fn covariance_identity_defect(gamma: &RMatrix, c: &RMatrix) -> f64 {
    let scale = gamma.max_abs().max(f64::MIN_POSITIVE);
    gamma.max_abs_diff(&dephasing_from_covariance(c)) / scale
}

const IDENTITY_TOL: f64 = 1e-12;

/// Diagonal values of the effective pair potential and the phase matrix.
#[derive(Debug, Clone)]
pub struct EffectivePotential {
    /// `V_x = -(G/2) sum_{n,m} m_n m_m f~(|x_n - x_m|)`, self-terms included.
    pub values: Vec<f64>,
    /// The same sum restricted to `n != m`.
    pub values_without_self: Vec<f64>,
    /// `(V_x - V_y) / hbar`.
    pub theta: RMatrix,
}

pub fn effective_potential(system: &ParticleSystem, constants: &PhysicalConstants) -> Result<EffectivePotential> {
    constants.validate()?;
    let sigma = system.sigma();
    let masses: Vec<f64> = system.particles().iter().map(|p| p.mass).collect();
    let pos = positions(system);
    let mut values = Vec::with_capacity(pos.len());
    let mut values_without_self = Vec::with_capacity(pos.len());
    for p in &pos {
        let mut full = 0.0;
        let mut cross = 0.0;
        for n in 0..masses.len() {
            for m in 0..masses.len() {
                let v = masses[n] * masses[m] * ftilde_raw(distance(&p[n], &p[m]), sigma);
                full += v;
                if n != m {
                    cross += v;
                }
            }
        }
        values.push(-0.5 * constants.g * full);
        values_without_self.push(-0.5 * constants.g * cross);
    }
    let d = values.len();
    let theta = RMatrix::from_fn(d, d, |x, y| (values[x] - values[y]) / constants.hbar);
    let theta_cross = RMatrix::from_fn(d, d, |x, y| (values_without_self[x] - values_without_self[y]) / constants.hbar);
    let scale = values.iter().fold(0.0f64, |m, v| m.max(v.abs())) / constants.hbar;
    let defect = theta.max_abs_diff(&theta_cross);
    if defect > 1e-12 * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::Model(format!("self-energy terms fail to cancel in the phase matrix (defect {defect:.3e})")));
    }
    Ok(EffectivePotential { values, values_without_self, theta })
}

fn assemble(
    tag: GeneratorTag,
    system: &ParticleSystem,
    kernel: Kernel,
    constants: &PhysicalConstants,
    gamma: RMatrix,
    theta: RMatrix,
) -> Result<GeneratorTables> {
    let point_covariance = point_covariance(system, &kernel, constants)?;
    let c = contract_points(system, &point_covariance);
    let tables = GeneratorTables { tag, kernel, constants: *constants, system: system.clone(), gamma, theta, c, point_covariance };
    tables.check_invariants()?;
    Ok(tables)
}

/// Averaged monitoring dynamics alone (no feedback, no potential).
pub fn monitoring_generator(system: &ParticleSystem, kernel: &Kernel, constants: &PhysicalConstants) -> Result<GeneratorTables> {
    let gamma = dephasing_rates(system, kernel, constants)?;
    let tag = match kernel {
        Kernel::Dp { .. } => GeneratorTag::MonitoringOnly,
        Kernel::Csl { .. } => GeneratorTag::CslMonitoring,
    };
    let d = system.dim();
    let tables = assemble(tag, system, *kernel, constants, gamma, RMatrix::zeros(d, d))?;
    let defect = covariance_identity_defect(&tables.gamma, &tables.c);
    if defect > IDENTITY_TOL {
        return Err(Error::Model(format!("dephasing rates disagree with the noise covariance (relative defect {defect:.3e})")));
    }
    Ok(tables)
}

/// Full averaged DP generator: the `1/|r-s|` double commutator with the
/// `G/2` prefactor plus the effective pair potential. The noise covariance
/// describes the `kappa = 2` monitoring process that unravels it.
pub fn dp_full_generator(system: &ParticleSystem, constants: &PhysicalConstants) -> Result<GeneratorTables> {
    constants.validate()?;
    let kernel = Kernel::dp_default();
    let gamma = dephasing_structure(system, &kernel).scaled(0.5 * coupling(constants));
    let theta = effective_potential(system, constants)?.theta;
    assemble(GeneratorTag::DpFull, system, kernel, constants, gamma, theta)
}

/// Monitoring at strength `kappa` plus the noise-averaged feedback of the
/// signal through the Newton potential. The feedback contributes its own
/// dephasing `G / (2 kappa hbar) S_xy` and the pair-potential phase.
pub fn feedback_averaged_generator(system: &ParticleSystem, kappa: f64, constants: &PhysicalConstants) -> Result<GeneratorTables> {
    let kernel = Kernel::Dp { kappa };
    let monitoring = dephasing_rates(system, &kernel, constants)?;
    let feedback = dephasing_structure(system, &kernel).scaled(coupling(constants) / (2.0 * kappa));
    let d = system.dim();
    let gamma = RMatrix::from_fn(d, d, |x, y| monitoring[(x, y)] + feedback[(x, y)]);
    let theta = effective_potential(system, constants)?.theta;
    assemble(GeneratorTag::FeedbackAveraged, system, kernel, constants, gamma, theta)
}

/// Elementwise ratio between two dephasing tables over all off-diagonal pairs
/// with a nonzero denominator.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct RatioFit {
    pub mean: f64,
    /// Largest deviation of any single pair's ratio from the mean.
    pub max_spread: f64,
    pub pairs: usize,
}

pub fn elementwise_ratio(numerator: &RMatrix, denominator: &RMatrix) -> RatioFit {
    let d = numerator.rows();
    let scale = denominator.max_abs();
    let mut ratios = Vec::new();
    for x in 0..d {
        for y in 0..d {
            if x != y && denominator[(x, y)].abs() > 1e-12 * scale {
                ratios.push(numerator[(x, y)] / denominator[(x, y)]);
            }
        }
    }
    let mean = ratios.iter().sum::<f64>() / ratios.len().max(1) as f64;
    let max_spread = ratios.iter().fold(0.0f64, |m, r| m.max((r - mean).abs()));
    RatioFit { mean, max_spread, pairs: ratios.len() }
}

/// Ratio of the full DP dissipator to the `kappa = 2` monitoring dissipator,
/// computed from the two independent construction paths.
pub fn dp_coefficient_ratio(system: &ParticleSystem, constants: &PhysicalConstants) -> Result<RatioFit> {
    let full = dp_full_generator(system, constants)?;
    let mon = monitoring_generator(system, &Kernel::dp_default(), constants)?;
    Ok(elementwise_ratio(&full.gamma, &mon.gamma))
}
