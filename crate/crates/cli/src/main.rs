//! `qsd`: exact QSDs, table reproduction, error scaling and method comparison.
//!
//! Exit status: 0 all checks pass, 1 a comparison failed, 2 a solver error,
//! 3 invalid arguments.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use qsd_core::config::{load_config, ModelConfig};
use qsd_core::io::{write_csv, write_distribution_csv, write_json};
use qsd_core::model::{verhulst_rates, SirParams, VerhulstParams};
use qsd_core::qsd::{cumulants_from_distribution, raw_moments, solve_qsd_with, CumulantSet, QsdMethod, QsdOptions};
use qsd_core::report::{compare_methods, error_scaling_report, reproduce_table, sir_report};
use qsd_core::sir::simulate_sir;
use qsd_core::Error;

#[derive(Parser)]
#[command(name = "qsd", version, about = "Quasi-stationary distributions of the Verhulst/SIS and SIR models")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Output format.
    #[arg(long, value_enum, default_value_t = Format::Json, global = true)]
    format: Format,

    /// Write to this file instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Exact QSD of the Verhulst model with its cumulants.
    Qsd(ModelArgs),
    /// Recompute a published table and check every cell.
    Table {
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=3))]
        table: u8,
    },
    /// Error ratios err(N)/err(2N) of the asymptotic approximations.
    Scaling {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, value_delimiter = ',', default_value = "100,200,400")]
        n_values: Vec<usize>,
    },
    /// Exact values against the asymptotic and closure approximations.
    Compare(ModelArgs),
    /// Truncated bivariate QSD against the SIR approximations, or a simulated path.
    Sir {
        #[command(flatten)]
        model: ModelArgs,
        /// Simulate one path up to this time instead of solving for the QSD.
        #[arg(long)]
        simulate: Option<f64>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

#[derive(Args)]
struct ModelArgs {
    #[arg(long = "N", alias = "n")]
    n: Option<usize>,
    #[arg(long = "R0", alias = "r0")]
    r0: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    mu: Option<f64>,
    /// TOML parameter file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

enum Failure {
    Invalid(String),
    Solver(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidParameter(_) | Error::NonIntegralCeiling { .. } | Error::BelowThreshold { .. } | Error::Config(_) => {
                Failure::Invalid(e.to_string())
            }
            e => Failure::Solver(e),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Solver(e.into())
    }
}

type Outcome = Result<bool, Failure>;

/// Flag values merged over an optional config file.
struct Merged {
    n: Option<usize>,
    r0: Option<f64>,
    alpha: Option<f64>,
    mu: f64,
}

impl ModelArgs {
    fn merge(&self, want_sir: bool) -> Result<Merged, Failure> {
        let mut m = Merged { n: None, r0: None, alpha: None, mu: 1.0 };
        if let Some(path) = &self.config {
            let cfg = load_config(path).map_err(|e| Failure::Invalid(format!("{}: {e}", path.display())))?;
            let (n, r0, alpha, mu) = match cfg {
                ModelConfig::Verhulst(p) if !want_sir => (p.n, p.r0, p.alpha, p.mu),
                ModelConfig::Sir(p) if want_sir => (p.n, p.r0, p.alpha, p.mu),
                _ => {
                    let kind = if want_sir { "an SIR" } else { "a Verhulst" };
                    return Err(Failure::Invalid(format!("{} does not describe {kind} model", path.display())));
                }
            };
            m = Merged { n: Some(n), r0: Some(r0), alpha: Some(alpha), mu };
        }
        m.n = self.n.or(m.n);
        m.r0 = self.r0.or(m.r0);
        m.alpha = self.alpha.or(m.alpha);
        m.mu = self.mu.unwrap_or(m.mu);
        Ok(m)
    }

    fn verhulst(&self) -> Result<VerhulstParams, Failure> {
        let m = self.merge(false)?;
        let (n, r0) = required(m.n, m.r0)?;
        Ok(VerhulstParams::new(n, r0, m.alpha.unwrap_or(0.0), m.mu)?)
    }

    fn sir(&self) -> Result<SirParams, Failure> {
        let m = self.merge(true)?;
        let (n, r0) = required(m.n, m.r0)?;
        let alpha = m.alpha.ok_or_else(|| Failure::Invalid("--alpha is required for the SIR model".into()))?;
        Ok(SirParams::new(n, r0, alpha, m.mu)?)
    }
}

fn required(n: Option<usize>, r0: Option<f64>) -> Result<(usize, f64), Failure> {
    match (n, r0) {
        (Some(n), Some(r0)) => Ok((n, r0)),
        (None, _) => Err(Failure::Invalid("--N is required (or give --config)".into())),
        (_, None) => Err(Failure::Invalid("--R0 is required (or give --config)".into())),
    }
}

struct Sink {
    format: Format,
    out: Option<PathBuf>,
}

impl Sink {
    fn writer(&self) -> Result<Box<dyn Write>, Failure> {
        Ok(match &self.out {
            Some(path) => Box::new(BufWriter::new(File::create(path)?)),
            None => Box::new(std::io::stdout().lock()),
        })
    }

    /// JSON writes `value`; CSV writes `rows`.
    fn emit<T: Serialize, R: Serialize>(&self, kind: &str, value: &T, rows: &[R]) -> Result<(), Failure> {
        let mut w = self.writer()?;
        match self.format {
            Format::Json => {
                write_json(kind, value, &mut w)?;
                writeln!(w)?;
            }
            Format::Csv => write_csv(kind, rows, &mut w)?,
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Serialize)]
struct QsdRecord<'a> {
    params: VerhulstParams,
    method: QsdMethod,
    sweeps: usize,
    residual: f64,
    killing_rate: f64,
    cumulants: CumulantSet,
    raw_moments: Vec<f64>,
    distribution: &'a qsd_core::qsd::Distribution,
}

#[derive(Serialize)]
struct PathPoint {
    t: f64,
    s: u64,
    i: u64,
}

fn run_qsd(args: &ModelArgs, sink: &Sink) -> Outcome {
    let p = args.verhulst()?;
    let rates = verhulst_rates(&p)?;
    let opts = QsdOptions::default();
    let sol = solve_qsd_with(&rates, &opts)?;
    log::info!("{:?} converged in {} sweeps, residual {:e}", sol.method, sol.sweeps, sol.residual);
    if sink.format == Format::Csv {
        let mut w = sink.writer()?;
        write_distribution_csv(&sol.distribution, &mut w)?;
        w.flush()?;
    } else {
        let record = QsdRecord {
            params: p,
            method: sol.method,
            sweeps: sol.sweeps,
            residual: sol.residual,
            killing_rate: sol.killing_rate,
            cumulants: cumulants_from_distribution(&sol.distribution, 4)?,
            raw_moments: raw_moments(&sol.distribution, 4)?,
            distribution: &sol.distribution,
        };
        sink.emit::<_, ()>("qsd", &record, &[])?;
    }
    Ok(sol.residual <= opts.tol * rates.max_total_rate())
}

fn run(cli: &Cli) -> Outcome {
    let sink = Sink { format: cli.format, out: cli.out.clone() };
    match &cli.command {
        Command::Qsd(args) => run_qsd(args, &sink),
        Command::Table { table } => {
            let report = reproduce_table(*table)?;
            for c in report.cells.iter().filter(|c| !c.pass) {
                log::warn!("cell ({}, {}, N={}) = {} vs printed {}", c.r0, c.quantity, c.n, c.value, c.reference);
            }
            sink.emit("table", &report, &report.cells)?;
            Ok(report.all_pass())
        }
        Command::Scaling { model, n_values } => {
            let report = error_scaling_report(&model.verhulst()?, n_values)?;
            sink.emit("scaling", &report, &report.rows)?;
            Ok(report.all_pass())
        }
        Command::Compare(args) => {
            let record = compare_methods(&args.verhulst()?)?;
            sink.emit("compare", &record, &record.errors())?;
            Ok(record.pass())
        }
        Command::Sir { model, simulate, seed } => {
            let p = model.sir()?;
            if let Some(t_end) = *simulate {
                let start = sir_start(&p);
                let traj = simulate_sir(&p, start, t_end, *seed)?;
                let rows: Vec<PathPoint> = traj.points.iter().map(|&(t, s, i)| PathPoint { t, s, i }).collect();
                sink.emit("trajectory", &traj, &rows)?;
                return Ok(true);
            }
            let record = sir_report(&p)?;
            sink.emit("sir", &record, &record.errors())?;
            Ok(record.meta.boundary_mass <= qsd_core::sir::BOUNDARY_MASS_LIMIT)
        }
    }
}

/// Rounded endemic equilibrium, or one infective near the disease-free state.
fn sir_start(p: &SirParams) -> (u64, u64) {
    let n = p.n as f64;
    if p.r0 > 1.0 {
        let s = (n / p.r0).round() as u64;
        let i = ((p.r0 - 1.0) * n / (p.alpha * p.r0)).round().max(1.0) as u64;
        (s, i)
    } else {
        (p.n as u64, 1)
    }
}

fn report_path(out: &Option<PathBuf>) -> String {
    out.as_deref().map(Path::display).map(|d| format!(" ({d})")).unwrap_or_default()
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(3) } else { ExitCode::SUCCESS };
        }
    };
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("qsd: comparison failed{}", report_path(&cli.out));
            ExitCode::from(1)
        }
        Err(Failure::Solver(e)) => {
            eprintln!("qsd: {e}");
            ExitCode::from(2)
        }
        Err(Failure::Invalid(msg)) => {
            eprintln!("qsd: {msg}");
            ExitCode::from(3)
        }
    }
}
