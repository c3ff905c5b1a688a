//! Subcommand implementations. Each returns the bytes to write; the binary
//! only handles argument parsing and file output.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;

use gravcollapse::dump::TrajectoryDump;
use gravcollapse::entanglement::{first_order_pq, negativity};
use gravcollapse::evolution::{evolve_exact, short_time_state};
use gravcollapse::generators::monitoring_generator;
use gravcollapse::model::{bmv_scenario, Kernel};
use gravcollapse::plot::line_chart;
use gravcollapse::scenario::{ModelKind, ScenarioConfig};
use gravcollapse::table::Table;
use gravcollapse::trajectories::{build_noise_model, ensemble_against_master, run_trajectory};
use gravcollapse::Error;
use rayon::prelude::*;
use serde_json::json;

/// Failure classes with their process exit codes.
#[derive(Debug)]
pub enum CliError {
    /// Bad input, or a check that did not pass.
    Validation(String),
    Numerical(String),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Numerical(_) => 2,
            CliError::Io(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Validation(m) => write!(f, "validation failure: {m}"),
            CliError::Numerical(m) => write!(f, "numerical failure: {m}"),
            CliError::Io(m) => write!(f, "I/O failure: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Validation(_) | Error::Parse(_) => CliError::Validation(e.to_string()),
            Error::Model(_) | Error::Numerical(_) => CliError::Numerical(e.to_string()),
            Error::Io(_) => CliError::Io(e.to_string()),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// Read a config file, or the defaults when no path is given. `seed`
/// replaces `trajectories.master_seed`.
pub fn load_config(path: Option<&Path>, seed: Option<u64>) -> CliResult<ScenarioConfig> {
    let mut cfg = match path {
        Some(p) => {
            let bytes = fs::read(p).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?;
            ScenarioConfig::from_json_bytes(&bytes)?
        }
        None => ScenarioConfig::default(),
    };
    if let Some(s) = seed {
        cfg.trajectories.master_seed = s;
    }
    Ok(cfg)
}

/// Write through a temporary file in the target directory and rename it
/// into place, so readers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let io = |e: std::io::Error| CliError::Io(format!("{}: {e}", path.display()));
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path.file_name().ok_or_else(|| CliError::Io(format!("{}: not a file path", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result.map_err(io)
}

/// `x_index, y_index, gamma, theta, c` for every configuration pair of the
/// configured model's averaged generator.
pub fn cmd_rates(cfg: &ScenarioConfig) -> CliResult<Table> {
    let tables = cfg.averaged_tables()?;
    let d = tables.dim();
    let mut t = Table::new(["x_index", "y_index", "gamma", "theta", "c"]);
    for x in 0..d {
        for y in 0..d {
            t.push(vec![x as f64, y as f64, tables.gamma[(x, y)], tables.theta[(x, y)], tables.c[(x, y)]])?;
        }
    }
    Ok(t)
}

/// Whether the closed-form first-order negativity describes this model.
fn first_order_applies(cfg: &ScenarioConfig) -> bool {
    cfg.model == ModelKind::DpMonitoring && cfg.kernel() == Kernel::dp_default()
}

/// Coherence magnitudes and negativity on the configured time grid.
pub fn cmd_evolve(cfg: &ScenarioConfig) -> CliResult<Table> {
    let tables = cfg.averaged_tables()?;
    let system = cfg.system()?;
    let rho0 = cfg.initial_state()?;
    let times = cfg.times();
    let res = evolve_exact(&rho0, &tables, &times)?;
    let d = tables.dim();
    let pairs: Vec<(usize, usize)> = (0..d).flat_map(|x| ((x + 1)..d).map(move |y| (x, y))).collect();
    let with_first_order = first_order_applies(cfg);
    let mut header: Vec<String> = vec!["t".into()];
    header.extend(pairs.iter().map(|(x, y)| format!("coh_{x}_{y}")));
    header.push("negativity_exact".into());
    if with_first_order {
        header.push("negativity_first_order".into());
    }
    let mut t = Table::new(header);
    let k = cfg.physical_constants();
    for (time, state) in times.iter().zip(&res.states) {
        let mut row = vec![*time];
        row.extend(pairs.iter().map(|&(x, y)| state.get(x, y).norm()));
        row.push(negativity(state, &system, &cfg.bipartition)?.negativity);
        if with_first_order {
            row.push(first_order_pq(cfg.m, cfg.a, cfg.d, cfg.sigma, *time, &k)?.negativity);
        }
        t.push(row)?;
    }
    Ok(t)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    A,
    D,
    Sigma,
    M,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::A => "a",
            SweepParam::D => "d",
            SweepParam::Sigma => "sigma",
            SweepParam::M => "m",
        }
    }
}

impl std::str::FromStr for SweepParam {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "a" => Ok(SweepParam::A),
            "d" => Ok(SweepParam::D),
            "sigma" => Ok(SweepParam::Sigma),
            "m" => Ok(SweepParam::M),
            _ => Err(format!("unknown sweep parameter {s:?} (expected a, d, sigma or m)")),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SweepRange {
    pub start: f64,
    pub stop: f64,
    pub points: usize,
    /// Geometric instead of linear spacing.
    pub log: bool,
}

impl SweepRange {
    pub fn values(&self) -> CliResult<Vec<f64>> {
        if self.points == 0 || !self.start.is_finite() || !self.stop.is_finite() {
            return Err(CliError::Validation("sweep needs a finite range and at least one point".into()));
        }
        if self.log && !(self.start > 0.0 && self.stop > 0.0) {
            return Err(CliError::Validation("a logarithmic sweep needs positive endpoints".into()));
        }
        let n = self.points;
        let frac = |k: usize| if n == 1 { 0.0 } else { k as f64 / (n - 1) as f64 };
        Ok((0..n)
            .map(|k| {
                if self.log {
                    (self.start.ln() + frac(k) * (self.stop.ln() - self.start.ln())).exp()
                } else {
                    self.start + frac(k) * (self.stop - self.start)
                }
            })
            .collect())
    }
}

/// First-order `p`, `q` and negativity against the brute-force negativity of
/// the short-time state, one row per grid value. Uses the `kappa = 2` DP
/// monitoring dissipator that the closed form describes. Without `dt` each
/// point uses `0.05 / max gamma`.
pub fn cmd_sweep(cfg: &ScenarioConfig, param: SweepParam, range: SweepRange, dt: Option<f64>) -> CliResult<Table> {
    if let Some(h) = dt {
        if !(h > 0.0 && h.is_finite()) {
            return Err(CliError::Validation(format!("dt must be positive, got {h}")));
        }
    }
    if cfg.kernel() != Kernel::dp_default() {
        return Err(CliError::Validation("the p/q sweep covers DP monitoring at kappa = 2 only".into()));
    }
    let values = range.values()?;
    let k = cfg.physical_constants();
    let rows: Vec<Vec<f64>> = values
        .par_iter()
        .map(|&v| -> CliResult<Vec<f64>> {
            let (mut m, mut a, mut d, mut sigma) = (cfg.m, cfg.a, cfg.d, cfg.sigma);
            match param {
                SweepParam::A => a = v,
                SweepParam::D => d = v,
                SweepParam::Sigma => sigma = v,
                SweepParam::M => m = v,
            }
            let (system, rho) = bmv_scenario(m, a, d, sigma)?;
            let tables = monitoring_generator(&system, &Kernel::dp_default(), &k)?;
            let rate = tables.gamma_max();
            let dt = dt.unwrap_or(if rate > 0.0 { 0.05 / rate } else { 0.0 });
            let pq = first_order_pq(m, a, d, sigma, dt, &k)?;
            let exact = negativity(&short_time_state(&rho, &tables, dt)?, &system, &cfg.bipartition)?.negativity;
            let ratio = if pq.p != 0.0 { pq.q / pq.p } else { f64::NAN };
            Ok(vec![v, dt, pq.p, pq.q, pq.negativity, exact, pq.negativity_large_sigma, ratio])
        })
        .collect::<CliResult<_>>()?;
    let mut t = Table::new([param.name(), "dt", "p", "q", "n_approx", "n_exact", "n_large_sigma", "q_over_p"]);
    for r in rows {
        t.push(r)?;
    }
    Ok(t)
}

pub struct TrajectoryOutput {
    pub table: Table,
    pub report: serde_json::Value,
    pub pass: bool,
    /// Encoded dump of trajectory 0, when requested.
    pub dump: Option<Vec<u8>>,
}

/// Ensemble run compared with the averaged generator of the configured model.
pub fn cmd_trajectories(cfg: &ScenarioConfig, want_dump: bool) -> CliResult<TrajectoryOutput> {
    let monitoring = cfg.monitoring_tables()?;
    let ens = cfg.ensemble_config();
    let (summary, cmp) = ensemble_against_master(&cfg.initial_state()?, &monitoring, &ens)?;
    let target = cfg.averaged_tables()?;
    let exact = evolve_exact(&cfg.initial_state()?, &target, &ens.times)?;
    let system = cfg.system()?;
    let mut table = Table::new(["t", "max_deviation", "max_std_error", "max_z", "pass", "negativity_mean", "negativity_exact"]);
    for (i, c) in cmp.checkpoints.iter().enumerate() {
        let mean = gravcollapse::entanglement::matrix_negativity(&summary.mean_states[i], &system, &cfg.bipartition)?.negativity;
        let ex = negativity(&exact.states[i], &system, &cfg.bipartition)?.negativity;
        table.push(vec![c.time, c.max_deviation, c.max_std_error, c.max_z, if c.pass { 1.0 } else { 0.0 }, mean, ex])?;
    }
    let max_z = cmp.checkpoints.iter().map(|c| c.max_z).fold(0.0, f64::max);
    let report = json!({
        "model": cfg.model,
        "mode": ens.mode,
        "scheme": ens.scheme,
        "n_traj": ens.n_traj,
        "completed": summary.trajectory_count,
        "aborted": summary.aborted,
        "first_abort": summary.first_abort,
        "master_seed": ens.master_seed,
        "dt": ens.dt,
        "band_standard_errors": gravcollapse::trajectories::SE_BAND,
        "max_z": max_z,
        "pass": cmp.pass,
        "checkpoints": cmp.checkpoints,
    });
    let dump = if want_dump {
        let noise = build_noise_model(&monitoring)?;
        let rec = run_trajectory(&cfg.initial_state()?, &monitoring, &noise, &ens, 0, true)?;
        let params = serde_json::to_value(cfg).map_err(|e| CliError::Validation(e.to_string()))?;
        Some(TrajectoryDump::from_record(&rec, ens.dt, params).encode()?)
    } else {
        None
    };
    Ok(TrajectoryOutput { table, report, pass: cmp.pass, dump })
}

pub fn cmd_plot(csv: &[u8], x: &str, ys: &[&str], title: &str) -> CliResult<String> {
    let table = Table::from_csv_bytes(csv)?;
    Ok(line_chart(&table, x, ys, title)?)
}
