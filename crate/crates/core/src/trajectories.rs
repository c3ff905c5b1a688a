//! Stochastic unraveling of the monitoring dynamics.
//!
//! All monitored operators are diagonal in the configuration basis, so the
//! continuum noise field enters only through the noise covariance `C`. It is
//! factored at the level of (particle, site) points, `B = L_B L_B^T`, and
//! lifted to configurations as `L = A L_B`, where `A` marks the points a
//! configuration occupies. Mode `k` is then a diagonal measurement operator
//! with eigenvalue `L[x][k]` on configuration `x` and signal
//!
//! ```text
//! dy_k = dW_k + 2 <L_k> dt
//! ```
//!
//! using the populations before the step. The back-action is the diagonal
//! phase `exp(i (2 / kappa) sum_k L[x][k] dy_k)`, which is a product of
//! per-particle phases because every row of `L` is a sum over occupied points.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{validation, Error, Result};
use crate::evolution::{evolve_exact, EvolutionResult};
use crate::generators::{feedback_averaged_generator, GeneratorTables};
use crate::linalg::{pivoted_cholesky, CMatrix, RMatrix};
use crate::model::{validate_state, DensityMatrix, Kernel, ParticleSystem, StateTolerance};

/// Relative pivot floor for the noise factorization.
pub const RANK_TOLERANCE: f64 = 1e-12;
/// Largest allowed `dt * rate_scale`.
pub const MAX_STEP_RATE: f64 = 1e-2;
/// A step whose unnormalized trace falls below this aborts the trajectory.
pub const TRACE_FLOOR: f64 = 1e-6;
/// Fraction of aborted trajectories that fails an ensemble.
pub const MAX_ABORT_FRACTION: f64 = 0.01;
pub const MIN_TRAJECTORIES: usize = 100;
/// Deviations are accepted within `SE_BAND` standard errors plus `ABS_SLACK`.
pub const SE_BAND: f64 = 4.0;
pub const ABS_SLACK: f64 = 1e-12;

const CHUNK: usize = 64;

#[derive(Debug, Clone)]
pub struct NoiseModel {
    /// Points x modes, `B = point_factor point_factor^T`.
    pub point_factor: RMatrix,
    /// Configurations x modes, `C = config_factor config_factor^T`.
    pub config_factor: RMatrix,
    pub mode_count: usize,
    /// `max |L L^T - C| / max |C|`.
    pub reconstruction_error: f64,
    point_particle: Vec<(usize, usize)>,
    /// `C_xx` recomputed from the factor so the step is exactly consistent.
    self_variance: Vec<f64>,
}

impl NoiseModel {
    pub fn dim(&self) -> usize {
        self.config_factor.rows()
    }
}

pub fn build_noise_model(tables: &GeneratorTables) -> Result<NoiseModel> {
    let system = &tables.system;
    let chol = pivoted_cholesky(&tables.point_covariance, RANK_TOLERANCE)?;
    let point_factor = chol.factor;
    let modes = chol.rank;
    let occupation = system.configuration_points();
    let d = system.dim();
    let config_factor = RMatrix::from_fn(d, modes, |x, k| occupation[x].iter().map(|&p| point_factor[(p, k)]).sum());
    let rebuilt = config_factor.matmul(&config_factor.transpose());
    let scale = tables.c.max_abs();
    let reconstruction_error = if scale > 0.0 { rebuilt.max_abs_diff(&tables.c) / scale } else { rebuilt.max_abs() };
    if reconstruction_error > 1e-10 {
        return Err(Error::Model(format!("noise factor reproduces C only to {reconstruction_error:.3e}")));
    }
    let point_particle = (0..system.point_count())
        .map(|p| {
            let (n, _, _) = system.point(p);
            (n, p - system.point_index(n, 0))
        })
        .collect();
    let self_variance = (0..d).map(|x| config_factor.row(x).iter().map(|v| v * v).sum()).collect();
    Ok(NoiseModel { point_factor, config_factor, mode_count: modes, reconstruction_error, point_particle, self_variance })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    /// Diagonal Kraus step `rho -> M rho M / tr`, `M_x = exp(s_x - C_xx dt)`.
    /// Positive by construction.
    #[default]
    Exponential,
    /// Plain Euler-Maruyama with the innovation `{L - <L>, rho}`.
    EulerMaruyama,
}

#[derive(Debug, Clone)]
pub struct StepOutput {
    pub state: CMatrix,
    /// `dy_k` per mode.
    pub signal: Vec<f64>,
    /// `(L_B dy)_p` per point.
    pub point_signal: Vec<f64>,
    /// Trace before renormalization.
    pub trace: f64,
}

/// `mode_count` independent `N(0, dt)` draws.
pub fn draw_increments(rng: &mut impl Rng, modes: usize, dt: f64) -> Vec<f64> {
    let s = dt.sqrt();
    (0..modes).map(|_| s * rng.sample::<f64, _>(StandardNormal)).collect()
}

fn populations(rho: &CMatrix) -> Vec<f64> {
    (0..rho.dim()).map(|x| rho[(x, x)].re).collect()
}

/// `dy = dW + 2 <L> dt` and its lift to points.
fn signal_increments(noise: &NoiseModel, pop: &[f64], dw: &[f64], dt: f64) -> (Vec<f64>, Vec<f64>) {
    let lc = &noise.config_factor;
    let signal: Vec<f64> = (0..noise.mode_count)
        .map(|k| {
            let mean: f64 = pop.iter().enumerate().map(|(x, p)| p * lc[(x, k)]).sum();
            dw[k] + 2.0 * mean * dt
        })
        .collect();
    let point_signal = (0..noise.point_factor.rows()).map(|p| noise.point_factor.row(p).iter().zip(&signal).map(|(l, y)| l * y).sum()).collect();
    (signal, point_signal)
}

fn check_step(noise: &NoiseModel, tables: &GeneratorTables, rho: &CMatrix, dw: &[f64], dt: f64) -> Result<()> {
    if rho.dim() != noise.dim() || tables.dim() != noise.dim() {
        return validation("state, noise model and generator dimensions differ");
    }
    if dw.len() != noise.mode_count {
        return validation(format!("expected {} noise increments, got {}", noise.mode_count, dw.len()));
    }
    if !(dt > 0.0) || dt * tables.rate_scale() > MAX_STEP_RATE {
        return validation(format!("step needs 0 < dt * rate <= {MAX_STEP_RATE}, got {:.3e}", dt * tables.rate_scale()));
    }
    Ok(())
}

/// One monitoring step driven by the given Wiener increments. The drift of
/// `tables` beyond the monitoring dephasing (its phase matrix) is applied
/// as `exp(-i Theta dt)`.
pub fn step_sme(rho: &CMatrix, noise: &NoiseModel, tables: &GeneratorTables, dt: f64, scheme: Scheme, dw: &[f64]) -> Result<StepOutput> {
    check_step(noise, tables, rho, dw, dt)?;
    let d = rho.dim();
    let pop = populations(rho);
    let (signal, point_signal) = signal_increments(noise, &pop, dw, dt);
    let lc = &noise.config_factor;
    let contract = |v: &[f64], x: usize| -> f64 { lc.row(x).iter().zip(v).map(|(l, y)| l * y).sum() };
    let mut out = match scheme {
        Scheme::Exponential => {
            let m: Vec<f64> = (0..d).map(|x| (contract(&signal, x) - noise.self_variance[x] * dt).exp()).collect();
            CMatrix::from_fn(d, |x, y| {
                let phase = Complex64::from_polar(1.0, -tables.theta[(x, y)] * dt);
                rho[(x, y)] * (m[x] * m[y]) * phase
            })
        }
        Scheme::EulerMaruyama => {
            let eps: Vec<f64> = (0..d).map(|x| contract(dw, x)).collect();
            let mean: f64 = pop.iter().zip(&eps).map(|(p, e)| p * e).sum();
            CMatrix::from_fn(d, |x, y| {
                let drift = Complex64::new(-tables.gamma[(x, y)] * dt, -tables.theta[(x, y)] * dt);
                rho[(x, y)] * (1.0 + drift + (eps[x] - mean) + (eps[y] - mean))
            })
        }
    };
    let trace = out.trace().re;
    if !(trace >= TRACE_FLOOR) || !trace.is_finite() {
        return Err(Error::Numerical(format!("trace collapsed to {trace:.3e} during a stochastic step")));
    }
    out.as_mut_slice().iter_mut().for_each(|v| *v /= trace);
    Ok(StepOutput { state: out, signal, point_signal, trace })
}

/// Per-particle diagonal back-action factors `exp(i (2/kappa) s_p)` built
/// from the point-level signal.
pub fn particle_factors(noise: &NoiseModel, system: &ParticleSystem, point_signal: &[f64], kappa: f64) -> Vec<Vec<Complex64>> {
    let mut factors: Vec<Vec<Complex64>> = system.particles().iter().map(|p| vec![Complex64::new(1.0, 0.0); p.sites.len()]).collect();
    for (p, &(n, s)) in noise.point_particle.iter().enumerate() {
        factors[n][s] = Complex64::from_polar(1.0, 2.0 / kappa * point_signal[p]);
    }
    factors
}

/// Diagonal of the product of per-particle factors over configurations.
pub fn tensor_diagonal(system: &ParticleSystem, factors: &[Vec<Complex64>]) -> Vec<Complex64> {
    (0..system.dim())
        .map(|x| {
            let digits = system.site_indices(x).expect("index in range");
            digits.iter().enumerate().map(|(n, &s)| factors[n][s]).product()
        })
        .collect()
}

/// Sign of the applied back-action phase; `Flipped` is a fault-injection
/// mode that reverses the feedback and hence the averaged phase matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PhaseSign {
    #[default]
    Nominal,
    Flipped,
}

impl PhaseSign {
    fn value(self) -> f64 {
        match self {
            Self::Nominal => 1.0,
            Self::Flipped => -1.0,
        }
    }
}

/// Diagonal of the back-action unitary from the configuration-level signal
/// `sum_k L[x][k] dy_k`.
pub fn backaction_diagonal(noise: &NoiseModel, signal: &[f64], kappa: f64, sign: PhaseSign) -> Vec<Complex64> {
    let lc = &noise.config_factor;
    (0..noise.dim())
        .map(|x| {
            let s: f64 = lc.row(x).iter().zip(signal).map(|(l, y)| l * y).sum();
            Complex64::from_polar(1.0, sign.value() * 2.0 / kappa * s)
        })
        .collect()
}

/// `U rho U^dagger` for diagonal `U`.
pub fn apply_diagonal_unitary(rho: &CMatrix, u: &[Complex64]) -> CMatrix {
    CMatrix::from_fn(rho.dim(), |x, y| u[x] * rho[(x, y)] * u[y].conj())
}

/// Feedback of one step's signal as a diagonal unitary.
pub fn apply_backaction(rho: &CMatrix, noise: &NoiseModel, signal: &[f64], kappa: f64) -> CMatrix {
    apply_diagonal_unitary(rho, &backaction_diagonal(noise, signal, kappa, PhaseSign::Nominal))
}

fn dp_kappa(tables: &GeneratorTables) -> Result<f64> {
    match tables.kernel {
        Kernel::Dp { kappa } => Ok(kappa),
        Kernel::Csl { .. } => validation("back-action needs a DP monitoring kernel"),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EnsembleMode {
    /// Monitoring steps only.
    MonitoringOnly,
    /// Monitoring followed by the back-action of the same step's signal.
    WithBackaction,
    /// The state is never updated by the monitoring; only the stochastic
    /// back-action unitary driven by the signal is applied.
    BackactionOnly,
}

#[derive(Debug, Clone)]
pub struct EnsembleConfig {
    pub n_traj: usize,
    pub dt: f64,
    pub master_seed: u64,
    /// Checkpoint times, starting at 0.
    pub times: Vec<f64>,
    pub scheme: Scheme,
    pub mode: EnsembleMode,
    pub phase_sign: PhaseSign,
}

/// Averaged generator the ensemble mean should follow for the given mode.
/// `None` for [`EnsembleMode::BackactionOnly`], which has no master-equation
/// counterpart in the library.
pub fn target_generator(monitoring: &GeneratorTables, mode: EnsembleMode) -> Result<Option<GeneratorTables>> {
    match mode {
        EnsembleMode::MonitoringOnly => Ok(Some(monitoring.clone())),
        EnsembleMode::WithBackaction => {
            let kappa = dp_kappa(monitoring)?;
            Ok(Some(feedback_averaged_generator(&monitoring.system, kappa, &monitoring.constants)?))
        }
        EnsembleMode::BackactionOnly => Ok(None),
    }
}

/// One trajectory sampled at the checkpoint times.
#[derive(Debug, Clone)]
pub struct TrajectoryRecord {
    pub index: u64,
    pub master_seed: u64,
    pub times: Vec<f64>,
    pub states: Vec<CMatrix>,
    /// Signal integrated over each checkpoint interval, per mode (zero at `t = 0`).
    pub signals: Vec<Vec<f64>>,
    /// Trace before renormalization at every step.
    pub renormalization_log: Vec<f64>,
}

fn trajectory_rng(master_seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index);
    rng
}

fn check_config(cfg: &EnsembleConfig, tables: &GeneratorTables) -> Result<()> {
    let t = &cfg.times;
    if t.is_empty() || t[0] != 0.0 || t.windows(2).any(|w| !(w[1] > w[0])) || t.iter().any(|v| !v.is_finite()) {
        return validation("checkpoint times must start at 0 and increase strictly");
    }
    if !(cfg.dt > 0.0) || cfg.dt * tables.rate_scale() > MAX_STEP_RATE {
        return validation(format!("trajectory dt must satisfy 0 < dt * rate <= {MAX_STEP_RATE}"));
    }
    if cfg.mode != EnsembleMode::MonitoringOnly {
        let kappa = dp_kappa(tables)?;
        // the back-action adds phase and dephasing rates of order (2/kappa)^2 Gamma
        if cfg.dt * tables.rate_scale() * (1.0 + 4.0 / (kappa * kappa)) > 2.0 * MAX_STEP_RATE {
            return validation("trajectory dt too large for the back-action rates");
        }
    }
    Ok(())
}

/// Run trajectory `index` of an ensemble. With `keep_log` the per-step traces
/// are kept.
pub fn run_trajectory(
    rho0: &DensityMatrix,
    tables: &GeneratorTables,
    noise: &NoiseModel,
    cfg: &EnsembleConfig,
    index: u64,
    keep_log: bool,
) -> Result<TrajectoryRecord> {
    check_config(cfg, tables)?;
    let kappa = if cfg.mode == EnsembleMode::MonitoringOnly { 0.0 } else { dp_kappa(tables)? };
    let mut rng = trajectory_rng(cfg.master_seed, index);
    let mut rho = rho0.matrix().clone();
    let mut states = vec![rho.clone()];
    let mut signals = vec![vec![0.0; noise.mode_count]];
    let mut log = Vec::new();
    for w in cfg.times.windows(2) {
        let span = w[1] - w[0];
        let steps = (span / cfg.dt).round().max(1.0) as usize;
        let h = span / steps as f64;
        let mut acc = vec![0.0; noise.mode_count];
        for _ in 0..steps {
            let dw = draw_increments(&mut rng, noise.mode_count, h);
            let signal = match cfg.mode {
                EnsembleMode::BackactionOnly => {
                    let (signal, _) = signal_increments(noise, &populations(&rho), &dw, h);
                    rho = apply_diagonal_unitary(&rho, &backaction_diagonal(noise, &signal, kappa, cfg.phase_sign));
                    signal
                }
                mode => {
                    let out = step_sme(&rho, noise, tables, h, cfg.scheme, &dw)?;
                    if keep_log {
                        log.push(out.trace);
                    }
                    rho = out.state;
                    if mode == EnsembleMode::WithBackaction {
                        rho = apply_diagonal_unitary(&rho, &backaction_diagonal(noise, &out.signal, kappa, cfg.phase_sign));
                    }
                    out.signal
                }
            };
            acc.iter_mut().zip(&signal).for_each(|(a, s)| *a += s);
        }
        validate_state(&rho, &StateTolerance::TRAJECTORY)?;
        states.push(rho.clone());
        signals.push(acc);
    }
    Ok(TrajectoryRecord { index, master_seed: cfg.master_seed, times: cfg.times.clone(), states, signals, renormalization_log: log })
}

#[derive(Debug, Clone)]
pub struct EnsembleSummary {
    pub times: Vec<f64>,
    pub mean_states: Vec<CMatrix>,
    /// Standard error of the mean, real and imaginary parts, per element.
    pub std_error_re: Vec<RMatrix>,
    pub std_error_im: Vec<RMatrix>,
    pub trajectory_count: usize,
    pub aborted: usize,
    pub first_abort: Option<String>,
}

struct Accumulator {
    count: usize,
    aborted: usize,
    first_abort: Option<String>,
    sum: Vec<CMatrix>,
    sum_sq_re: Vec<RMatrix>,
    sum_sq_im: Vec<RMatrix>,
}

impl Accumulator {
    fn new(points: usize, d: usize) -> Self {
        Self {
            count: 0,
            aborted: 0,
            first_abort: None,
            sum: vec![CMatrix::zeros(d); points],
            sum_sq_re: vec![RMatrix::zeros(d, d); points],
            sum_sq_im: vec![RMatrix::zeros(d, d); points],
        }
    }

    fn add(&mut self, states: &[CMatrix]) {
        self.count += 1;
        for (t, s) in states.iter().enumerate() {
            let d = s.dim();
            for x in 0..d {
                for y in 0..d {
                    let v = s[(x, y)];
                    self.sum[t][(x, y)] += v;
                    self.sum_sq_re[t][(x, y)] += v.re * v.re;
                    self.sum_sq_im[t][(x, y)] += v.im * v.im;
                }
            }
        }
    }

    fn merge(&mut self, other: Accumulator) {
        self.count += other.count;
        self.aborted += other.aborted;
        if self.first_abort.is_none() {
            self.first_abort = other.first_abort;
        }
        for t in 0..self.sum.len() {
            for (a, b) in self.sum[t].as_mut_slice().iter_mut().zip(other.sum[t].as_slice()) {
                *a += b;
            }
            let d = self.sum[t].dim();
            for x in 0..d {
                for y in 0..d {
                    self.sum_sq_re[t][(x, y)] += other.sum_sq_re[t][(x, y)];
                    self.sum_sq_im[t][(x, y)] += other.sum_sq_im[t][(x, y)];
                }
            }
        }
    }
}

/// Run `n_traj` trajectories in parallel and average them. Trajectory `i`
/// draws from stream `i` of the master seed and partial sums are combined in
/// index order, so the result does not depend on the worker count.
pub fn run_ensemble(rho0: &DensityMatrix, monitoring: &GeneratorTables, cfg: &EnsembleConfig) -> Result<EnsembleSummary> {
    if cfg.n_traj < MIN_TRAJECTORIES {
        return validation(format!("an ensemble needs at least {MIN_TRAJECTORIES} trajectories"));
    }
    run_ensemble_unchecked(rho0, monitoring, cfg)
}

/// [`run_ensemble`] without the minimum-size guard, for small exploratory runs.
pub fn run_ensemble_unchecked(rho0: &DensityMatrix, monitoring: &GeneratorTables, cfg: &EnsembleConfig) -> Result<EnsembleSummary> {
    if cfg.n_traj == 0 {
        return validation("an ensemble needs at least one trajectory");
    }
    check_config(cfg, monitoring)?;
    if rho0.dim() != monitoring.dim() {
        return validation("initial state does not match the generator dimension");
    }
    let noise = build_noise_model(monitoring)?;
    let d = rho0.dim();
    let points = cfg.times.len();
    let chunks = cfg.n_traj.div_ceil(CHUNK);
    let partials: Vec<Accumulator> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut acc = Accumulator::new(points, d);
            for i in (c * CHUNK)..((c + 1) * CHUNK).min(cfg.n_traj) {
                match run_trajectory(rho0, monitoring, &noise, cfg, i as u64, false) {
                    Ok(rec) => acc.add(&rec.states),
                    Err(e) => {
                        acc.aborted += 1;
                        if acc.first_abort.is_none() {
                            acc.first_abort = Some(format!("trajectory {i}: {e}"));
                        }
                    }
                }
            }
            acc
        })
        .collect();
    let mut total = Accumulator::new(points, d);
    for p in partials {
        total.merge(p);
    }
    if total.aborted as f64 > MAX_ABORT_FRACTION * cfg.n_traj as f64 || total.count == 0 {
        return Err(Error::Numerical(format!(
            "{} of {} trajectories aborted; first: {}",
            total.aborted,
            cfg.n_traj,
            total.first_abort.unwrap_or_default()
        )));
    }
    let n = total.count as f64;
    let se = |sum_sq: &RMatrix, mean: &CMatrix, part: fn(Complex64) -> f64| {
        RMatrix::from_fn(d, d, |x, y| {
            let m = part(mean[(x, y)]);
            let var = (sum_sq[(x, y)] / n - m * m).max(0.0) * n / (n - 1.0).max(1.0);
            (var / n).sqrt()
        })
    };
    let mean_states: Vec<CMatrix> = total.sum.iter().map(|s| CMatrix::from_fn(d, |x, y| s[(x, y)] / n)).collect();
    for (t, m) in mean_states.iter().enumerate() {
        let tr = m.trace();
        if (tr.re - 1.0).abs() > 1e-9 || tr.im.abs() > 1e-9 {
            return Err(Error::Numerical(format!("ensemble mean trace {tr} at checkpoint {t}")));
        }
    }
    let std_error_re = mean_states.iter().zip(&total.sum_sq_re).map(|(m, s)| se(s, m, |v| v.re)).collect();
    let std_error_im = mean_states.iter().zip(&total.sum_sq_im).map(|(m, s)| se(s, m, |v| v.im)).collect();
    Ok(EnsembleSummary {
        times: cfg.times.clone(),
        mean_states,
        std_error_re,
        std_error_im,
        trajectory_count: total.count,
        aborted: total.aborted,
        first_abort: total.first_abort,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckpointComparison {
    pub time: f64,
    pub max_deviation: f64,
    /// Largest standard error over the elements.
    pub max_std_error: f64,
    /// Largest `|deviation| / SE` over elements with a nonzero SE.
    pub max_z: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct EnsembleComparison {
    pub checkpoints: Vec<CheckpointComparison>,
    pub pass: bool,
}

/// Compare the ensemble mean elementwise (real and imaginary parts) with a
/// deterministic evolution on the same times.
pub fn compare_with_master(summary: &EnsembleSummary, exact: &EvolutionResult) -> Result<EnsembleComparison> {
    if summary.times != exact.times {
        return validation("ensemble and master-equation time grids differ");
    }
    let mut checkpoints = Vec::new();
    for (t, time) in summary.times.iter().enumerate() {
        let mean = &summary.mean_states[t];
        let target = exact.states[t].matrix();
        let d = mean.dim();
        let (mut dev, mut band, mut z, mut pass) = (0.0f64, 0.0f64, 0.0f64, true);
        for x in 0..d {
            for y in 0..d {
                let diff = mean[(x, y)] - target[(x, y)];
                for (delta, se) in [(diff.re, summary.std_error_re[t][(x, y)]), (diff.im, summary.std_error_im[t][(x, y)])] {
                    dev = dev.max(delta.abs());
                    band = band.max(se);
                    if se > 0.0 {
                        z = z.max(delta.abs() / se);
                    }
                    pass &= delta.abs() <= SE_BAND * se + ABS_SLACK;
                }
            }
        }
        checkpoints.push(CheckpointComparison { time: *time, max_deviation: dev, max_std_error: band, max_z: z, pass });
    }
    let pass = checkpoints.iter().all(|c| c.pass);
    Ok(EnsembleComparison { checkpoints, pass })
}

/// Run the ensemble and compare it with the matching averaged generator.
pub fn ensemble_against_master(
    rho0: &DensityMatrix,
    monitoring: &GeneratorTables,
    cfg: &EnsembleConfig,
) -> Result<(EnsembleSummary, EnsembleComparison)> {
    let target = target_generator(monitoring, cfg.mode)?.ok_or_else(|| Error::Validation("this ensemble mode has no averaged generator".into()))?;
    let summary = run_ensemble_unchecked(rho0, monitoring, cfg)?;
    let exact = evolve_exact(rho0, &target, &cfg.times)?;
    let cmp = compare_with_master(&summary, &exact)?;
    Ok((summary, cmp))
}
