use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::Value;

use spinsq_core::kernel::delta_prime;
use spinsq_core::rates::validity_report;

use crate::config::{ConfigError, ExperimentConfig, ModelSelect, OutputFormat, RawConfig};
use crate::presets::{run_figure, FigureId, FigureOutput};
use crate::sweep::{rates_for, run_sweep, with_workers};
use crate::table::{Cell, Table};

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "spinsq", version, about = "Squeezing transfer from squeezed light to multilayer atomic arrays")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Configuration file (flat `section.key = value`).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output file; tables go to stdout when omitted.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// Worker threads for independent grid points.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Base seed of the Monte Carlo streams.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Truncation tolerance of the evanescent sums.
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    /// Override any configuration key, e.g. `--set geometry.n_layers=5`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Cooperative rates, reflectivity and regime diagnostics per layer count.
    Rates,
    /// Beam-splitter model only.
    Analytic,
    /// Beam-splitter model and multilayer steady state.
    Numeric,
    /// Steady state checked against stochastic trajectories.
    McCheck,
    /// Sweep with the model chosen in the configuration.
    Sweep,
    /// Squeezing against photon number at a = 0.68.
    Fig3a,
    /// Optimal squeezing against layer count.
    Fig3b,
    /// Squeezing at a = 0.95 with and without the evanescent shift.
    Fig4,
}

impl Command {
    fn figure(self) -> Option<FigureId> {
        match self {
            Self::Fig3a => Some(FigureId::Fig3a),
            Self::Fig3b => Some(FigureId::Fig3b),
            Self::Fig4 => Some(FigureId::Fig4),
            _ => None,
        }
    }
}

#[derive(Debug)]
enum Failure {
    Config(ConfigError),
    Io(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Self::Config(e)
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Self::Io(e.to_string())
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        Self::Io(e.to_string())
    }
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(code) => code,
        Err(Failure::Config(e)) => {
            eprintln!("error: {e}");
            EXIT_CONFIG
        }
        Err(Failure::Io(e)) => {
            eprintln!("error: {e}");
            EXIT_IO
        }
    }
}

/// Configuration file, then `--set`, then the dedicated flags.
pub fn load_raw(cli: &Cli) -> Result<RawConfig, ConfigError> {
    let mut raw = RawConfig::locate(cli.config.as_deref())?;
    for pair in &cli.overrides {
        raw.set_pair(pair)?;
    }
    if let Some(s) = cli.seed {
        raw.set("mc.seed", &s.to_string())?;
    }
    if let Some(t) = cli.tol {
        raw.set("kernel.tol", &t.to_string())?;
    }
    if let Some(w) = cli.workers {
        raw.set("run.workers", &w.to_string())?;
    }
    if let Some(f) = cli.format {
        raw.set("output.format", if f == Format::Csv { "csv" } else { "json" })?;
    }
    if let Some(p) = &cli.out {
        raw.set("output.path", &p.display().to_string())?;
    }
    Ok(raw)
}

fn execute(cli: &Cli) -> Result<i32, Failure> {
    let raw = load_raw(cli)?;
    if let Some(fig) = cli.command.figure() {
        return figure(fig, &raw);
    }
    let mut cfg = ExperimentConfig::from_raw(&raw)?;
    let table = match cli.command {
        Command::Rates => {
            let t = with_workers(cfg.workers, || rates_table(&cfg));
            emit(&t, cfg.format, cfg.output.as_deref())?;
            return Ok(EXIT_OK);
        }
        Command::Analytic => {
            cfg.model = ModelSelect::Analytic;
            run_sweep(&cfg)
        }
        Command::Numeric => {
            cfg.model = ModelSelect::Both;
            run_sweep(&cfg)
        }
        Command::McCheck => {
            cfg.model = ModelSelect::McCheck;
            run_sweep(&cfg)
        }
        _ => run_sweep(&cfg),
    };
    emit(&table.table, cfg.format, cfg.output.as_deref())?;
    Ok(sweep_status(table.n_errors, table.table.rows.len()))
}

fn sweep_status(n_errors: usize, n_rows: usize) -> i32 {
    if n_rows > 0 && n_errors == n_rows {
        eprintln!("error: every grid point failed; see the error column");
        EXIT_SOLVER
    } else {
        if n_errors > 0 {
            eprintln!("warning: {n_errors} of {n_rows} grid points failed; see the error column");
        }
        EXIT_OK
    }
}

fn figure(id: FigureId, raw: &RawConfig) -> Result<i32, Failure> {
    let cfg = id.config(raw)?;
    let out: FigureOutput = run_figure(id, raw)?;
    let path = cfg.output.clone().unwrap_or_else(|| {
        PathBuf::from(format!("{id}.{}", if cfg.format == OutputFormat::Json { "json" } else { "csv" }))
    });
    emit(&out.table, cfg.format, Some(&path))?;
    write_json(&out.summary, &FigureOutput::summary_path(&path))?;
    eprintln!("wrote {} and {}", path.display(), FigureOutput::summary_path(&path).display());
    Ok(sweep_status(out.n_errors, out.table.rows.len()))
}

fn write_json(v: &Value, path: &Path) -> Result<(), Failure> {
    let mut w = BufWriter::new(File::create(path).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?);
    serde_json::to_writer_pretty(&mut w, v).map_err(|e| Failure::Io(e.to_string()))?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn emit(table: &Table, format: OutputFormat, path: Option<&Path>) -> Result<(), Failure> {
    let sink: Box<dyn Write> = match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).map_err(|e| Failure::Io(format!("{}: {e}", p.display())))?,
        )),
        None => Box::new(io::stdout().lock()),
    };
    match format {
        OutputFormat::Csv => table.write_csv(sink)?,
        OutputFormat::Json => table.write_json(sink)?,
    }
    Ok(())
}

pub const RATES_COLUMNS: &[&str] = &[
    "n_layers",
    "gamma0",
    "eta",
    "gamma_coll",
    "gamma_loss",
    "gamma_s",
    "r0",
    "delta_prime_over_gamma0",
    "n_eff",
    "validity",
    "error",
];

/// One row per layer count; rates in units of the single-atom decay rate.
pub fn rates_table(cfg: &ExperimentConfig) -> Table {
    use rayon::prelude::*;
    let rows: Vec<Vec<Cell>> = cfg
        .layers
        .par_iter()
        .map(|&nz| {
            let mut row = vec![Cell::Int(nz as i64)];
            let result = cfg.geometry.with_layers(nz).and_then(|g| {
                let r = rates_for(cfg, &g)?;
                let dp = delta_prime(&g, &r, &cfg.kernel)?;
                Ok((g, r, dp))
            });
            match result {
                Ok((g, r, dp)) => {
                    let v = validity_report(&g, &cfg.beam, cfg.n_photons[cfg.n_photons.len() - 1], &r);
                    row.extend([
                        Cell::Num(r.gamma0),
                        Cell::Num(r.eta),
                        Cell::Num(r.gamma_coll),
                        Cell::Num(r.gamma_loss),
                        Cell::Num(r.gamma_s),
                        Cell::Num(r.r0),
                        Cell::Num(dp / r.gamma0),
                        Cell::Num(v.n_eff),
                        Cell::Text(if v.all_ok() { "ok".into() } else { "check".into() }),
                        Cell::Empty,
                    ]);
                }
                Err(e) => {
                    row.resize(RATES_COLUMNS.len() - 1, Cell::Empty);
                    row.push(Cell::Text(e.to_string()));
                }
            }
            row
        })
        .collect();
    let mut t = Table::new(RATES_COLUMNS);
    for r in rows {
        t.push(r);
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_config() {
        let cli = Cli::try_parse_from(["spinsq", "sweep", "--seed", "7", "--tol", "1e-10", "--set", "geometry.n_layers=3"]).unwrap();
        let cfg = ExperimentConfig::from_raw(&load_raw(&cli).unwrap()).unwrap();
        assert_eq!(cfg.mc.seed, 7);
        assert_eq!(cfg.kernel.tol, 1e-10);
        assert_eq!(cfg.geometry.n_layers, 3);
    }

    #[test]
    fn exit_codes() {
        assert_eq!(run(["spinsq", "sweep", "--set", "bogus=1"]), EXIT_CONFIG);
        assert_eq!(run(["spinsq", "frobnicate"]), EXIT_CONFIG);
        assert_eq!(run(["spinsq", "sweep", "--config", "/nonexistent/x.conf"]), EXIT_CONFIG);
        assert_eq!(sweep_status(2, 2), EXIT_SOLVER);
        assert_eq!(sweep_status(1, 2), EXIT_OK);
    }

    #[test]
    fn rates_rows() {
        let mut cfg = ExperimentConfig::defaults();
        cfg.eta = Some(0.99);
        let t = rates_table(&cfg);
        let r0 = t.values("r0")[0].unwrap();
        assert!((r0 - 0.980198019801980198).abs() < 1e-12);
    }
}
