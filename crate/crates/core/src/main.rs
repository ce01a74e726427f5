use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use log::info;
use serde::Serialize;

use shift_hpo::datasets::{load_csv, Dataset, UnlabeledDataset};
use shift_hpo::density_ratio::{fit_ulsif, UlsifConfig};
use shift_hpo::harness::{run_mscs, run_toy_sweep, verify_table1, EstimatorKind, RunConfig, ToySweepConfig};
use shift_hpo::surrogate_bo::BoConfig;

#[derive(Parser)]
#[command(name = "shift-hpo", version, about = "Hyperparameter optimization under covariate shift")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthetic sweep over source half-widths c.
    Toy(ToyArgs),
    /// Experiment described by a JSON config file.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Report path; the regrets CSV is written next to it. Stdout if omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit a density-ratio model between two CSV files and dump it as JSON.
    DensityRatio {
        #[arg(long)]
        target: PathBuf,
        #[arg(long)]
        source: PathBuf,
        /// Column to drop from both files before fitting.
        #[arg(long)]
        label_column: Option<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Recompute the two-source worked example; exit code 0 on pass.
    VerifyTable1,
}

#[derive(Args)]
struct ToyArgs {
    #[arg(long, value_delimiter = ',', default_values_t = [1.0, 2.0, 3.0, 4.0, 5.0])]
    c_values: Vec<f64>,
    #[arg(long, default_value_t = 2)]
    k: usize,
    #[arg(long, default_value_t = 1000)]
    n: usize,
    /// Number of seeds, run as 0..N.
    #[arg(long, default_value_t = 30)]
    seeds: u64,
    #[arg(long, value_delimiter = ',', default_value = "oracle,naive,unbiased,vr")]
    estimators: Vec<String>,
    #[arg(long, default_value_t = 50)]
    budget: usize,
    #[arg(long, default_value_t = 5)]
    n_init: usize,
    #[arg(long, default_value_t = 1.0)]
    c_target: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn write_json<T: Serialize>(value: &T, out: Option<&Path>) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => Ok(io::stdout().write_all(text.as_bytes())?),
    }
}

fn csv_path(out: &Path) -> PathBuf {
    out.with_extension("csv")
}

fn features_only(path: &Path, label_column: Option<&str>) -> anyhow::Result<UnlabeledDataset> {
    Ok(match load_csv(path, label_column)? {
        Dataset::Labeled(d) => d.to_unlabeled()?,
        Dataset::Unlabeled(d) => d,
    })
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::Toy(a) => {
            let estimators = a
                .estimators
                .iter()
                .map(|s| EstimatorKind::parse(s))
                .collect::<Result<Vec<_>, _>>()?;
            let cfg = ToySweepConfig {
                c_values: a.c_values,
                c_target: a.c_target,
                k: a.k,
                n: a.n,
                seeds: (0..a.seeds).collect(),
                estimators,
                bo: BoConfig {
                    budget: a.budget,
                    n_init: a.n_init,
                    ..BoConfig::default()
                },
                ..ToySweepConfig::default()
            };
            let report = run_toy_sweep(&cfg)?;
            for e in &report.entries {
                let agg = &e.report.aggregate;
                info!(
                    "c={} {}: regret {:.5} ± {:.5}",
                    e.c,
                    e.report.estimator.name(),
                    agg.mean_regret.unwrap_or(f64::NAN),
                    agg.se_regret.unwrap_or(f64::NAN)
                );
            }
            write_json(&report, a.out.as_deref())?;
            if let Some(out) = &a.out {
                report.write_csv(BufWriter::new(File::create(csv_path(out))?))?;
            }
        }
        Command::Run { config, out } => {
            let text = fs::read_to_string(&config).with_context(|| format!("reading {}", config.display()))?;
            let cfg = RunConfig::from_json(&text)?;
            let report = run_mscs(&cfg)?;
            write_json(&report, out.as_deref())?;
            if let Some(out) = &out {
                report.write_csv(BufWriter::new(File::create(csv_path(out))?))?;
            }
        }
        Command::DensityRatio {
            target,
            source,
            label_column,
            seed,
            out,
        } => {
            let t = features_only(&target, label_column.as_deref())?;
            let s = features_only(&source, label_column.as_deref())?;
            if t.features().dim() != s.features().dim() {
                bail!(
                    "target has {} features, source has {}",
                    t.features().dim(),
                    s.features().dim()
                );
            }
            let model = fit_ulsif(
                &t,
                s.features(),
                &UlsifConfig {
                    seed,
                    ..UlsifConfig::default()
                },
            )?;
            let (_, clipped) = model.evaluate_rows(s.features())?;
            info!(
                "bandwidth {}, ridge {}, clipped fraction on source {clipped}",
                model.bandwidth(),
                model.ridge()
            );
            write_json(&model, out.as_deref())?;
        }
        Command::VerifyTable1 => {
            let report = verify_table1()?;
            for c in &report.checks {
                println!(
                    "{} {:<30} computed {:>10.4}  expected {:>10.4}",
                    if c.passed { "PASS" } else { "FAIL" },
                    c.name,
                    c.computed,
                    c.expected
                );
            }
            return Ok(if report.passed { ExitCode::SUCCESS } else { ExitCode::FAILURE });
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("SHIFT_HPO_LOG", "error")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
