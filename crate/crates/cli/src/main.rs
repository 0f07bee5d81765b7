//! `lossnet` command-line front end.

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use lossnet::{run_observed, Rates};
use lossnet_cli::config::{Overrides, SssWindowMode, SweepConfig};
use lossnet_cli::couple::coupling_report;
use lossnet_cli::exact::{doubling_grid, exact_table};
use lossnet_cli::fit::fit_log_slope;
use lossnet_cli::sweep::{ensure_parent, read_csv, run_cell, run_sweep, write_dat, write_outputs};
use lossnet_cli::{CliError, WORKERS_ENV};

#[derive(Parser, Debug)]
#[command(name = "lossnet", version, about = "Lookahead admission control in overloaded two-class loss systems")]
struct Cli {
    /// Worker threads for sweeps and coupling reports.
    #[arg(long, global = true, env = WORKERS_ENV)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate one (N, policy, seed) cell and print its row as JSON.
    Simulate {
        #[command(flatten)]
        common: CommonArgs,
        /// Write every processed event as newline-delimited JSON.
        #[arg(long)]
        events: Option<PathBuf>,
    },
    /// Run a config-driven sweep.
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Exact best-threshold gaps over N, with a fit against ln N.
    Exact {
        /// Server counts; defaults to 16, 32, ..., 16384.
        #[arg(long, value_delimiter = ',')]
        n: Option<Vec<usize>>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Two-column data file of (N, gap).
        #[arg(long)]
        plot: Option<PathBuf>,
    },
    /// Coupling report: separation frequency per epoch of the left policy.
    Couple {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, default_value = "sss")]
        left: String,
        #[arg(long, default_value = "ae:sss,pfi")]
        right: String,
    },
    /// Fit gap against ln N for each policy in a sweep CSV.
    Fit {
        #[arg(long)]
        csv: PathBuf,
        /// Restrict to one policy string.
        #[arg(long)]
        policy: Option<String>,
    },
}

#[derive(Args, Debug)]
struct CommonArgs {
    /// JSON sweep configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    n: Option<Vec<usize>>,
    #[arg(long)]
    policy: Option<Vec<String>>,
    #[arg(long)]
    horizon: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    seed: Option<Vec<u64>>,
    /// Output CSV path.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Window constant c for bare `sss` policies (w = c ln N / N).
    #[arg(long)]
    sss_c: Option<f64>,
}

impl CommonArgs {
    fn resolve(&self) -> Result<SweepConfig> {
        let mut cfg = match &self.config {
            Some(p) => SweepConfig::load(p)?,
            None => SweepConfig::new(vec![100], vec!["pfi".into()], 1000.0, vec![1]),
        };
        cfg.apply(Overrides {
            n_list: self.n.clone(),
            policies: self.policy.clone(),
            horizon: self.horizon,
            seeds: self.seed.clone(),
            csv: self.out.clone(),
        });
        if let Some(c) = self.sss_c {
            cfg.sss_window = SssWindowMode::COverride(c);
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn run(cli: Cli, out: &mut dyn Write) -> Result<()> {
    let workers = cli.workers.unwrap_or_else(lossnet_cli::workers_from_env);
    match cli.command {
        Command::Simulate { common, events } => {
            let cfg = common.resolve()?;
            let (n, policy, seed) = (cfg.n_list[0], cfg.policies[0].clone(), cfg.seeds[0]);
            let row = run_cell(&cfg, n, &policy, seed)?;
            if let Some(path) = events {
                let params = cfg.params(n)?;
                let kind = cfg.policy_spec(&policy)?.resolve(&params);
                ensure_parent(&path)?;
                let file = std::fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?;
                let mut w = std::io::BufWriter::new(file);
                let mut failed = None;
                run_observed(params, &kind, &cfg.run_config(), seed, |a| {
                    if failed.is_none() {
                        if let Err(e) = writeln!(w, "{}", a.log_record()) {
                            failed = Some(e);
                        }
                    }
                })?;
                if let Some(e) = failed {
                    return Err(e).context("writing event log");
                }
                w.flush()?;
            }
            writeln!(out, "{}", serde_json::to_string(&row)?)?;
        }
        Command::Sweep { common } => {
            let cfg = common.resolve()?;
            let result = run_sweep(&cfg, workers)?;
            write_outputs(&cfg, &result)?;
            if cfg.output.csv.is_none() {
                let mut w = csv::Writer::from_writer(Vec::new());
                for r in &result.rows {
                    w.serialize(r)?;
                }
                out.write_all(&w.into_inner()?)?;
            }
            for f in &result.failures {
                log::error!("{}", serde_json::to_string(f)?);
            }
            writeln!(out, "{}", serde_json::to_string(&result.decompositions)?)?;
            if !result.failures.is_empty() {
                bail!(CliError::Cell(format!("{} of {} cells failed", result.failures.len(), result.rows.len())));
            }
        }
        Command::Exact { n, out: csv_out, plot } => {
            let n_list = n.unwrap_or_else(|| doubling_grid(4, 14));
            let table = exact_table(&Rates::REFERENCE, &n_list)?;
            if let Some(p) = csv_out {
                ensure_parent(&p)?;
                let mut w = csv::Writer::from_path(&p)?;
                for r in &table {
                    w.serialize(r)?;
                }
                w.flush()?;
            }
            if let Some(p) = plot {
                let pts: Vec<(f64, f64)> = table.iter().map(|r| (r.n as f64, r.gap)).collect();
                write_dat(&p, "N best-threshold gap", &pts)?;
            }
            for r in &table {
                writeln!(out, "{}", serde_json::to_string(r)?)?;
            }
            if n_list.len() >= 2 {
                let fit = fit_log_slope(&table.iter().map(|r| (r.n, r.gap)).collect::<Vec<_>>())?;
                writeln!(out, "{}", serde_json::json!({ "fit": fit }))?;
            }
        }
        Command::Couple { common, left, right } => {
            let cfg = common.resolve()?;
            let report = coupling_report(&cfg, &left, &right, workers)?;
            if let Some(p) = &cfg.output.csv {
                ensure_parent(p)?;
                let mut w = csv::Writer::from_path(p)?;
                for r in &report.rows {
                    w.serialize(r)?;
                }
                w.flush()?;
            }
            writeln!(out, "{}", serde_json::to_string_pretty(&report)?)?;
        }
        Command::Fit { csv, policy } => {
            let rows = read_csv(&csv)?;
            let mut policies: Vec<String> = Vec::new();
            for r in &rows {
                if !policies.contains(&r.policy) && policy.as_ref().is_none_or(|p| p == &r.policy) {
                    policies.push(r.policy.clone());
                }
            }
            if policies.is_empty() {
                bail!(CliError::Fit("no matching rows".into()));
            }
            for p in policies {
                let pts: Vec<(usize, f64)> =
                    rows.iter().filter(|r| r.policy == p && !r.is_failed()).map(|r| (r.n, r.gap_point)).collect();
                let fit = fit_log_slope(&pts)?;
                writeln!(out, "{}", serde_json::json!({ "policy": p, "fit": fit }))?;
            }
        }
    }
    Ok(())
}

fn error_record(e: &anyhow::Error) -> serde_json::Value {
    let kind = e.downcast_ref::<CliError>().map_or("error", CliError::kind);
    serde_json::json!({ "error": kind, "message": format!("{e:#}") })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let stdout = std::io::stdout();
    match run(cli, &mut stdout.lock()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", error_record(&e));
            ExitCode::FAILURE
        }
    }
}
