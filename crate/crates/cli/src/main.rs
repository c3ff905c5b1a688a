use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use gravcollapse_cli::commands::{
    cmd_evolve, cmd_plot, cmd_rates, cmd_sweep, cmd_trajectories, load_config, write_atomic, CliError, CliResult, SweepParam, SweepRange,
};
use gravcollapse_cli::validate::{run_all, Fault, ValidateOptions, OVERLAP_SAMPLES};

#[derive(Parser)]
#[command(name = "gravcollapse", version, about = "Collapse-model dephasing, feedback and entanglement on discrete sites")]
struct Cli {
    /// Scenario config (JSON). Defaults apply when omitted.
    #[arg(long, global = true, env = "GRAVCOLLAPSE_CONFIG")]
    config: Option<PathBuf>,
    /// Output file. Standard output when omitted.
    #[arg(long, global = true, env = "GRAVCOLLAPSE_OUT")]
    out: Option<PathBuf>,
    /// Master seed, overriding the config.
    #[arg(long, global = true, env = "GRAVCOLLAPSE_SEED")]
    seed: Option<u64>,
    /// Worker threads. Results do not depend on this.
    #[arg(long, global = true, env = "GRAVCOLLAPSE_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum FaultArg {
    FlipTheta,
}

#[derive(Subcommand)]
enum Command {
    /// Rate tables (gamma, theta, c) of the configured model.
    Rates,
    /// Deterministic evolution: coherences and negativity over the time grid.
    Evolve,
    /// First-order p, q and negativity over one parameter.
    Sweep {
        #[arg(long)]
        param: SweepParam,
        #[arg(long)]
        start: f64,
        #[arg(long)]
        stop: f64,
        #[arg(long, default_value_t = 11)]
        points: usize,
        /// Short-time step; defaults to 0.05 / max gamma at each point.
        #[arg(long)]
        dt: Option<f64>,
        /// Geometric spacing.
        #[arg(long)]
        log: bool,
    },
    /// Stochastic ensemble compared with the averaged master equation.
    Trajectories {
        /// JSON report path.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Raw dump of trajectory 0.
        #[arg(long)]
        dump: Option<PathBuf>,
    },
    /// Run every oracle check and write a JSON report.
    Validate {
        #[arg(long, value_enum)]
        fault: Option<FaultArg>,
        #[arg(long, default_value_t = 10_000)]
        n_traj: usize,
        #[arg(long, default_value_t = OVERLAP_SAMPLES)]
        oracle_samples: usize,
    },
    /// SVG line chart from a CSV produced by another subcommand.
    Plot {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        x: String,
        /// Repeat for several series.
        #[arg(long = "y", required = true)]
        y: Vec<String>,
        #[arg(long, default_value = "")]
        title: String,
    },
}

fn emit(out: Option<&Path>, bytes: &[u8]) -> CliResult<()> {
    match out {
        Some(p) => write_atomic(p, bytes),
        None => std::io::stdout().write_all(bytes).map_err(|e| CliError::Io(format!("stdout: {e}"))),
    }
}

fn run(cli: Cli) -> CliResult<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Validation("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| CliError::Numerical(e.to_string()))?;
    }
    let out = cli.out.as_deref();
    match cli.command {
        Command::Rates => emit(out, cmd_rates(&load_config(cli.config.as_deref(), cli.seed)?)?.to_csv_string().as_bytes()),
        Command::Evolve => emit(out, cmd_evolve(&load_config(cli.config.as_deref(), cli.seed)?)?.to_csv_string().as_bytes()),
        Command::Sweep { param, start, stop, points, dt, log } => {
            let cfg = load_config(cli.config.as_deref(), cli.seed)?;
            let table = cmd_sweep(&cfg, param, SweepRange { start, stop, points, log }, dt)?;
            emit(out, table.to_csv_string().as_bytes())
        }
        Command::Trajectories { report, dump } => {
            let cfg = load_config(cli.config.as_deref(), cli.seed)?;
            let res = cmd_trajectories(&cfg, dump.is_some())?;
            emit(out, res.table.to_csv_string().as_bytes())?;
            if let Some(p) = report {
                let text = serde_json::to_string_pretty(&res.report).map_err(|e| CliError::Numerical(e.to_string()))? + "\n";
                write_atomic(&p, text.as_bytes())?;
            }
            if let (Some(p), Some(bytes)) = (dump, res.dump) {
                write_atomic(&p, &bytes)?;
            }
            if res.pass {
                Ok(())
            } else {
                Err(CliError::Validation("ensemble mean left the standard-error band".into()))
            }
        }
        Command::Validate { fault, n_traj, oracle_samples } => {
            let opts = ValidateOptions {
                seed: cli.seed.unwrap_or(0),
                oracle_samples,
                n_traj,
                fault: fault.map(|FaultArg::FlipTheta| Fault::FlipTheta),
            };
            let report = run_all(&opts);
            eprint!("{}", report.summary());
            let text = serde_json::to_string_pretty(&report).map_err(|e| CliError::Numerical(e.to_string()))? + "\n";
            emit(out, text.as_bytes())?;
            if report.all_pass {
                Ok(())
            } else {
                Err(CliError::Validation("one or more checks failed".into()))
            }
        }
        Command::Plot { input, x, y, title } => {
            let csv = fs::read(&input).map_err(|e| CliError::Io(format!("{}: {e}", input.display())))?;
            let ys: Vec<&str> = y.iter().map(String::as_str).collect();
            emit(out, cmd_plot(&csv, &x, &ys, &title)?.as_bytes())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use gravcollapse::dump::TrajectoryDump;
    use gravcollapse::table::Table;
    use std::sync::Mutex;

    /// Parsing reads `GRAVCOLLAPSE_*` from the process environment, which one
    /// test sets; every test holds this lock while it runs.
    static ENV: Mutex<()> = Mutex::new(());

    fn exec(dir: &Path, args: &[&str]) -> i32 {
        let mut full = vec!["gravcollapse".to_string()];
        for a in args {
            // Paths are given relative to `dir`.
            let is_path = a.ends_with(".json") || a.ends_with(".csv") || a.ends_with(".svg") || a.ends_with(".bin");
            full.push(if is_path { dir.join(a).to_string_lossy().into_owned() } else { a.to_string() });
        }
        match Cli::try_parse_from(full) {
            Ok(cli) => run(cli).map_or_else(|e| e.exit_code(), |_| 0),
            Err(_) => 1,
        }
    }

    fn write(dir: &Path, name: &str, text: &str) {
        fs::write(dir.join(name), text).unwrap();
    }

    fn table(dir: &Path, name: &str) -> Table {
        Table::from_csv_bytes(&fs::read(dir.join(name)).unwrap()).unwrap()
    }

    #[test]
    fn rates_default_is_16_entries_with_zero_diagonal() {
        let _g = ENV.lock().unwrap_or_else(|e| e.into_inner());
        let dir = tempfile::tempdir().unwrap();
        assert_eq!(exec(dir.path(), &["rates", "--out", "r.csv"]), 0);
        let t = table(dir.path(), "r.csv");
        assert_eq!(t.rows.len(), 16);
        assert!(t.rows.iter().filter(|r| r[0] == r[1]).all(|r| r[2] == 0.0));
    }

    #[test]
    fn exit_codes_by_failure_class() {
        let _g = ENV.lock().unwrap_or_else(|e| e.into_inner());
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "bad.json", r#"{"sigma": -1}"#);
        write(dir.path(), "garbled.json", "{not json");
        assert_eq!(exec(dir.path(), &["--config", "bad.json", "rates"]), 1);
        assert_eq!(exec(dir.path(), &["--config", "garbled.json", "rates"]), 1);
        assert_eq!(exec(dir.path(), &["--config", "missing.json", "rates"]), 3);
        assert_eq!(exec(dir.path(), &["rates", "--out", "no/such/dir/o.csv"]), 3);
        assert_eq!(exec(dir.path(), &["sweep", "--param", "q", "--start", "1", "--stop", "2"]), 1);
        assert_eq!(exec(dir.path(), &["--threads", "0", "rates"]), 1);
    }

    #[test]
    fn config_errors_leave_no_output_file() {
        let _g = ENV.lock().unwrap_or_else(|e| e.into_inner());
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "bad.json", r#"{"model": "csl-monitoring"}"#);
        for cmd in ["rates", "evolve", "trajectories"] {
            assert_eq!(exec(dir.path(), &["--config", "bad.json", cmd, "--out", "o.csv"]), 1, "{cmd}");
        }
        let names: Vec<_> = fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
        assert_eq!(names.len(), 1, "{names:?}");
    }

    #[test]
    fn env_overrides_flags() {
        let _g = ENV.lock().unwrap_or_else(|e| e.into_inner());
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "c.json", r#"{"kappa": 4}"#);
        assert_eq!(exec(dir.path(), &["rates", "--out", "plain.csv"]), 0);
        std::env::set_var("GRAVCOLLAPSE_CONFIG", dir.path().join("c.json"));
        std::env::set_var("GRAVCOLLAPSE_OUT", dir.path().join("env.csv"));
        let code = exec(dir.path(), &["rates"]);
        std::env::remove_var("GRAVCOLLAPSE_CONFIG");
        std::env::remove_var("GRAVCOLLAPSE_OUT");
        assert_eq!(code, 0);
        let (a, b) = (table(dir.path(), "env.csv").column("gamma").unwrap(), table(dir.path(), "plain.csv").column("gamma").unwrap());
        assert!(a.iter().zip(&b).all(|(x, y)| *x == 2.0 * y));
    }

    #[test]
    fn evolve_then_plot_gives_valid_svg() {
        let _g = ENV.lock().unwrap_or_else(|e| e.into_inner());
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "c.json", r#"{"sigma": 1}"#);
        assert_eq!(exec(dir.path(), &["--config", "c.json", "evolve", "--out", "e.csv"]), 0);
        assert_eq!(exec(dir.path(), &["plot", "--input", "e.csv", "--x", "t", "--y", "negativity_exact", "--title", "negativity <t>", "--out", "n.svg"]), 0);
        let svg = fs::read_to_string(dir.path().join("n.svg")).unwrap();
        let doc = roxmltree::Document::parse(&svg).unwrap();
        assert_eq!(doc.root_element().tag_name().name(), "svg");
        assert_eq!(doc.descendants().filter(|n| n.has_tag_name("polyline")).count(), 1);
    }

    #[test]
    fn sweep_plot_has_one_polyline_per_column() {
        let _g = ENV.lock().unwrap_or_else(|e| e.into_inner());
        let dir = tempfile::tempdir().unwrap();
        assert_eq!(exec(dir.path(), &["sweep", "--param", "sigma", "--start", "1", "--stop", "20", "--points", "7", "--log", "--out", "s.csv"]), 0);
        assert_eq!(table(dir.path(), "s.csv").rows.len(), 7);
        assert_eq!(exec(dir.path(), &["plot", "--input", "s.csv", "--x", "sigma", "--y", "p", "--y", "q", "--y", "n_exact", "--out", "s.svg"]), 0);
        let svg = fs::read_to_string(dir.path().join("s.svg")).unwrap();
        let doc = roxmltree::Document::parse(&svg).unwrap();
        assert_eq!(doc.descendants().filter(|n| n.has_tag_name("polyline")).count(), 3);
    }

    #[test]
    fn plot_rejects_malformed_csv() {
        let _g = ENV.lock().unwrap_or_else(|e| e.into_inner());
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "bad.csv", "t,x\n1,2,3\n");
        assert_eq!(exec(dir.path(), &["plot", "--input", "bad.csv", "--x", "t", "--y", "x", "--out", "p.svg"]), 1);
        assert!(!dir.path().join("p.svg").exists());
    }

    #[test]
    fn tiny_ensemble_still_gives_a_verdict() {
        let _g = ENV.lock().unwrap_or_else(|e| e.into_inner());
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "c.json", r#"{"sigma": 1, "time": {"t_max": 1, "n_points": 3}, "trajectories": {"n_traj": 10, "dt": 0.01}}"#);
        let code = exec(dir.path(), &["--config", "c.json", "trajectories", "--report", "r.json", "--dump", "d.bin", "--out", "t.csv"]);
        assert!(code == 0 || code == 1);
        let report: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join("r.json")).unwrap()).unwrap();
        assert_eq!(report["completed"], 10);
        assert_eq!(report["pass"].as_bool().unwrap(), code == 0);
        let dump = TrajectoryDump::decode(&fs::read(dir.path().join("d.bin")).unwrap()).unwrap();
        assert_eq!((dump.records.len(), dump.header.dim), (3, 4));
    }

    #[test]
    fn seed_flag_selects_the_streams() {
        let _g = ENV.lock().unwrap_or_else(|e| e.into_inner());
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "c.json", r#"{"sigma": 1, "time": {"t_max": 1, "n_points": 3}, "trajectories": {"n_traj": 120, "dt": 0.01}}"#);
        for (seed, out) in [("1", "a.csv"), ("1", "b.csv"), ("2", "c.csv")] {
            exec(dir.path(), &["--config", "c.json", "--seed", seed, "trajectories", "--out", out]);
        }
        let read = |n: &str| fs::read(dir.path().join(n)).unwrap();
        assert_eq!(read("a.csv"), read("b.csv"));
        assert_ne!(read("a.csv"), read("c.csv"));
    }
}
