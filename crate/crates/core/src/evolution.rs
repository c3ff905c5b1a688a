//! Deterministic evolution under a diagonal generator
//! `d rho_xy/dt = -(Gamma_xy + i Theta_xy) rho_xy` (no free Hamiltonian).

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{validation, Result};
use crate::generators::GeneratorTables;
use crate::linalg::CMatrix;
use crate::model::{DensityMatrix, StateTolerance};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum EvolutionMethod {
    Exact,
    Rk4,
    FirstOrder,
}

#[derive(Debug, Clone)]
pub struct EvolutionResult {
    pub times: Vec<f64>,
    pub states: Vec<DensityMatrix>,
    pub method: EvolutionMethod,
}

fn check_dims(rho0: &DensityMatrix, tables: &GeneratorTables) -> Result<()> {
    if rho0.dim() != tables.dim() {
        return validation(format!("state dimension {} does not match generator dimension {}", rho0.dim(), tables.dim()));
    }
    Ok(())
}

fn check_times(times: &[f64]) -> Result<()> {
    match times.first() {
        None => return validation("time grid is empty"),
        Some(&t0) if t0 != 0.0 => return validation("time grid must start at 0"),
        _ => {}
    }
    if times.iter().any(|t| !t.is_finite()) || times.windows(2).any(|w| w[1] <= w[0]) {
        return validation("time grid must be finite and strictly increasing");
    }
    Ok(())
}

/// `n_points` equally spaced times on `[0, t_max]`.
pub fn uniform_times(t_max: f64, n_points: usize) -> Vec<f64> {
    let last = (n_points - 1).max(1) as f64;
    (0..n_points).map(|k| t_max * k as f64 / last).collect()
}

/// The generator applied once: `-(Gamma + i Theta) ∘ rho`.
pub fn apply_generator(rho: &CMatrix, tables: &GeneratorTables) -> CMatrix {
    CMatrix::from_fn(rho.dim(), |x, y| -Complex64::new(tables.gamma[(x, y)], tables.theta[(x, y)]) * rho[(x, y)])
}

fn exact_at(rho0: &CMatrix, tables: &GeneratorTables, t: f64) -> CMatrix {
    CMatrix::from_fn(rho0.dim(), |x, y| {
        let rate = Complex64::new(tables.gamma[(x, y)], tables.theta[(x, y)]);
        (-rate * t).exp() * rho0[(x, y)]
    })
}

/// Elementwise closed-form solution `rho_xy(t) = exp(-(Gamma_xy + i Theta_xy) t) rho_xy(0)`.
pub fn evolve_exact(rho0: &DensityMatrix, tables: &GeneratorTables, times: &[f64]) -> Result<EvolutionResult> {
    check_dims(rho0, tables)?;
    check_times(times)?;
    let states = times
        .par_iter()
        .map(|&t| DensityMatrix::new(exact_at(rho0.matrix(), tables, t)))
        .collect::<Result<Vec<_>>>()?;
    Ok(EvolutionResult { times: times.to_vec(), states, method: EvolutionMethod::Exact })
}

/// Fixed-step classic RK4. Each interval between output times is split into
/// the fewest equal steps no longer than `dt`.
pub fn evolve_rk4(rho0: &DensityMatrix, tables: &GeneratorTables, times: &[f64], dt: f64) -> Result<EvolutionResult> {
    check_dims(rho0, tables)?;
    check_times(times)?;
    let scale = tables.rate_scale();
    if !(dt > 0.0) || (scale > 0.0 && dt > 0.01 / scale) {
        return validation(format!("RK4 step {dt} must be positive and at most 0.01 / {scale:.3e}"));
    }
    let mut rho = rho0.matrix().clone();
    let mut states = vec![rho0.clone()];
    for w in times.windows(2) {
        let span = w[1] - w[0];
        let steps = (span / dt).ceil().max(1.0) as usize;
        let h = span / steps as f64;
        for _ in 0..steps {
            rho = rk4_step(&rho, tables, h);
        }
        states.push(DensityMatrix::new(rho.clone())?);
    }
    Ok(EvolutionResult { times: times.to_vec(), states, method: EvolutionMethod::Rk4 })
}

fn axpy(base: &CMatrix, k: &CMatrix, h: f64) -> CMatrix {
    let mut out = base.clone();
    for (o, v) in out.as_mut_slice().iter_mut().zip(k.as_slice()) {
        *o += v * h;
    }
    out
}

fn rk4_step(rho: &CMatrix, tables: &GeneratorTables, h: f64) -> CMatrix {
    let k1 = apply_generator(rho, tables);
    let k2 = apply_generator(&axpy(rho, &k1, 0.5 * h), tables);
    let k3 = apply_generator(&axpy(rho, &k2, 0.5 * h), tables);
    let k4 = apply_generator(&axpy(rho, &k3, h), tables);
    let mut out = rho.clone();
    let slices = (k1.as_slice(), k2.as_slice(), k3.as_slice(), k4.as_slice());
    for (i, o) in out.as_mut_slice().iter_mut().enumerate() {
        *o += (slices.0[i] + 2.0 * slices.1[i] + 2.0 * slices.2[i] + slices.3[i]) * (h / 6.0);
    }
    out
}

/// `rho(0) + dt * L(rho(0))`.
///
/// The first-order state is only positive up to `O((dt Gamma_max)^2)`, so the
/// positivity floor of the validator is relaxed by that amount.
pub fn short_time_state(rho0: &DensityMatrix, tables: &GeneratorTables, dt: f64) -> Result<DensityMatrix> {
    check_dims(rho0, tables)?;
    let gmax = tables.gamma_max();
    if !(dt >= 0.0) || dt * gmax > 0.1 {
        return validation(format!("short-time step needs 0 <= dt * Gamma_max <= 0.1, got {}", dt * gmax));
    }
    let rho = axpy(rho0.matrix(), &apply_generator(rho0.matrix(), tables), dt);
    let floor = (dt * tables.rate_scale()).powi(2) * rho0.dim() as f64;
    let tol = StateTolerance { min_eigenvalue: -(1e-10 + floor), ..StateTolerance::STRICT };
    DensityMatrix::with_tolerance(rho, &tol)
}

/// Max elementwise distance between two trajectories of states.
pub fn max_state_error(a: &EvolutionResult, b: &EvolutionResult) -> f64 {
    a.states
        .iter()
        .zip(&b.states)
        .map(|(x, y)| x.matrix().max_abs_diff(y.matrix()))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::{dp_full_generator, monitoring_generator};
    use crate::model::{bmv_scenario, Kernel, PhysicalConstants};
    use crate::overlaps::ftilde;

    fn bmv(sigma: f64) -> (DensityMatrix, GeneratorTables, GeneratorTables) {
        let (system, rho) = bmv_scenario(1.0, 1.0, 3.0, sigma).unwrap();
        let k = PhysicalConstants::natural();
        let mon = monitoring_generator(&system, &Kernel::dp_default(), &k).unwrap();
        let full = dp_full_generator(&system, &k).unwrap();
        (rho, mon, full)
    }

    #[test]
    fn exact_identity_at_zero_and_constant_populations() {
        let (rho, _, full) = bmv(1.0);
        let times = uniform_times(50.0, 6);
        let res = evolve_exact(&rho, &full, &times).unwrap();
        assert_eq!(res.states[0], rho);
        for s in &res.states {
            for x in 0..4 {
                assert_eq!(s.get(x, x), rho.get(x, x));
            }
        }
    }

    #[test]
    fn rk4_matches_exact() {
        let (rho, _, full) = bmv(1.0);
        let horizon = 5.0 / full.gamma_max();
        let times = uniform_times(horizon, 11);
        let dt = 0.01 / full.rate_scale();
        let exact = evolve_exact(&rho, &full, &times).unwrap();
        let rk = evolve_rk4(&rho, &full, &times, dt).unwrap();
        assert!(max_state_error(&exact, &rk) < 1e-8);
        for s in &rk.states {
            assert!((s.matrix().trace().re - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn rk4_rejects_large_steps() {
        let (rho, _, full) = bmv(1.0);
        assert!(evolve_rk4(&rho, &full, &[0.0, 1.0], 1.0 / full.rate_scale()).is_err());
    }

    #[test]
    fn bad_time_grids_rejected() {
        let (rho, mon, _) = bmv(1.0);
        assert!(evolve_exact(&rho, &mon, &[]).is_err());
        assert!(evolve_exact(&rho, &mon, &[0.5, 1.0]).is_err());
        assert!(evolve_exact(&rho, &mon, &[0.0, 1.0, 1.0]).is_err());
    }

    #[test]
    fn short_time_matches_matrix_element_bracket() {
        // <x|rho(dt)|y> = [1 - (G m^2 dt / 4) sum_ij (I_xixj + I_yiyj - 2 I_xiyj)] <x|rho(0)|y>
        let sigma = 1.0;
        let (rho, mon, _) = bmv(sigma);
        let sites = [[-0.5, 0.5], [2.5, 3.5]];
        let f = |u: f64, v: f64| ftilde((u - v).abs(), sigma).unwrap();
        let bracket = |x: usize, y: usize, dt: f64| {
            let xs = [sites[0][x / 2], sites[1][x % 2]];
            let ys = [sites[0][y / 2], sites[1][y % 2]];
            let mut s = 0.0;
            for i in 0..2 {
                for j in 0..2 {
                    s += f(xs[i], xs[j]) + f(ys[i], ys[j]) - 2.0 * f(xs[i], ys[j]);
                }
            }
            1.0 - 0.25 * dt * s
        };
        let mut errors = Vec::new();
        for dt in [0.2, 0.1] {
            let exact = evolve_exact(&rho, &mon, &[0.0, dt]).unwrap();
            let short = short_time_state(&rho, &mon, dt).unwrap();
            let mut worst = 0.0f64;
            for x in 0..4 {
                for y in 0..4 {
                    let predicted = bracket(x, y, dt) * 0.25;
                    assert!((short.get(x, y).re - predicted).abs() < 1e-15);
                    worst = worst.max((exact.states[1].get(x, y).re - predicted).abs());
                }
            }
            errors.push(worst);
        }
        let ratio = errors[0] / errors[1];
        assert!((ratio - 4.0).abs() < 0.1, "error ratio {ratio}");
    }

    #[test]
    fn short_time_is_second_order_close_and_hermitian() {
        let (rho, _, full) = bmv(1.0);
        let dt = 0.05 / full.rate_scale();
        let e1 = evolve_exact(&rho, &full, &[0.0, dt]).unwrap().states[1].matrix().max_abs_diff(short_time_state(&rho, &full, dt).unwrap().matrix());
        let e2 = evolve_exact(&rho, &full, &[0.0, dt / 2.0]).unwrap().states[1].matrix().max_abs_diff(short_time_state(&rho, &full, dt / 2.0).unwrap().matrix());
        assert!((e1 / e2 - 4.0).abs() < 0.1);
        let s = short_time_state(&rho, &full, dt).unwrap();
        assert_eq!(s.matrix().hermiticity_defect(), 0.0);
        assert_eq!(short_time_state(&rho, &full, 0.0).unwrap(), rho);
    }

    #[test]
    fn full_dp_coherences_decay_monotonically() {
        let (rho, _, mut full) = bmv(0.7);
        full.theta = crate::linalg::RMatrix::zeros(4, 4);
        let res = evolve_exact(&rho, &full, &uniform_times(10.0 / full.gamma_max(), 40)).unwrap();
        for w in res.states.windows(2) {
            for x in 0..4 {
                for y in 0..4 {
                    assert!(w[1].get(x, y).norm() <= w[0].get(x, y).norm());
                }
            }
        }
    }

    #[test]
    fn positivity_over_long_times() {
        for sigma in [0.3, 1.0, 4.0] {
            let (rho, mon, full) = bmv(sigma);
            for tables in [&mon, &full] {
                let times = uniform_times(10.0 / tables.gamma_max(), 25);
                evolve_exact(&rho, tables, &times).unwrap();
            }
        }
    }
}
