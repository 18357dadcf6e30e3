use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use zfhgm_cli::*;

#[derive(Parser)]
#[command(name = "zfhgm", about = "ZF receiver outage and capacity experiments")]
struct Cli {
    /// Experiment config (TOML or JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Comma-separated engines: series, double-series, hgm, mc, gamma-approx, rayleigh.
    #[arg(long, global = true)]
    engines: Option<String>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Series working precision in decimal digits.
    #[arg(long, global = true)]
    precision: Option<u32>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Outage probability along the configured sweep axis.
    OutageSweep,
    /// Outage averaged over lognormal (K, AS) draws.
    OutageAveraged,
    /// ZF and ML sum rates along the configured sweep axis.
    CapacitySweep,
    /// Outage at the reference table's configurations.
    Table1,
    /// Runs the self-check suite; exits nonzero on any failure.
    Validate,
    /// Guesses and certifies the annihilator of a measure.
    GuessOde {
        /// outage, capacity, mgf:<s> or pdf:<t>.
        #[arg(long, default_value = "outage")]
        measure: String,
        #[arg(long, default_value_t = 15.0)]
        gamma_b_db: f64,
    },
}

fn load(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(e) = &cli.engines {
        cfg.engines = parse_engines(e)?;
    }
    if let Some(o) = &cli.out {
        cfg.out_dir = o.clone();
    }
    if cli.precision.is_some() {
        cfg.precision_digits = cli.precision;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<bool> {
    let cfg = load(&cli)?;
    match cli.command {
        Command::OutageSweep => {
            let (rows, t) = run_outage_sweep(&cfg)?;
            println!(
                "{}",
                write_outputs(&cfg, "outage_sweep", &rows, &t)?.display()
            );
        }
        Command::OutageAveraged => {
            let rows = run_averaged_outage(&cfg)?;
            for r in rows.iter().filter(|r| r.hgm_failures > 0) {
                eprintln!(
                    "Γb={} dB: HGM failed on {} of {} draws, {} replaced by the long series",
                    r.gamma_b_db,
                    r.hgm_failures,
                    r.samples + r.failures,
                    r.series_fallbacks
                );
            }
            println!(
                "{}",
                write_outputs(&cfg, "outage_averaged", &rows, &[])?.display()
            );
        }
        Command::CapacitySweep => {
            let (rows, t) = run_capacity_sweep(&cfg)?;
            println!(
                "{}",
                write_outputs(&cfg, "capacity_sweep", &rows, &t)?.display()
            );
        }
        Command::Table1 => {
            let (rows, t) = table1(&cfg)?;
            for r in &rows {
                let mut v = r.value.map_or_else(
                    || r.error.clone().unwrap_or_default(),
                    |v| format!("{v:.3e}"),
                );
                if r.converged == Some(false) {
                    v.push_str(" (not converged)");
                }
                println!(
                    "{:<8} Γb={:>4} dB  {:<13} {}  (reference {:.2e})",
                    r.config, r.gamma_b_db, r.engine, v, r.reference
                );
            }
            write_outputs(&cfg, "table1", &rows, &t)?;
        }
        Command::Validate => {
            let report = run_validation_suite(&cfg);
            for c in &report.checks {
                println!(
                    "{} {}: {}",
                    if c.passed { "PASS" } else { "FAIL" },
                    c.name,
                    c.detail
                );
            }
            write_json(&cfg.out_dir.join("validation.json"), &report)?;
            return Ok(report.passed);
        }
        Command::GuessOde {
            measure,
            gamma_b_db,
        } => {
            let kind = parse_measure(&measure, cfg.tau())?;
            let op = guess_ode(&cfg, &kind, gamma_b_db)?;
            let path = cfg.out_dir.join("operator.json");
            write_json(&path, &op)?;
            println!(
                "order {} degree {} -> {}",
                op.order,
                op.degree,
                path.display()
            );
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
