mod config;

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use serde::Serialize;

use config::{parse_run_config, parse_synthetic_spec, ArchChoice, RunConfig};
use wopt_core::data::{gen_synthetic, write_wopt, Dataset};
use wopt_core::experiment::{run_experiment, ExperimentConfig, ExperimentSummary};
use wopt_core::metrics::MetricsRecord;
use wopt_core::nn::Architecture;
use wopt_core::verify::{run_suite, Suite};

const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERIC: u8 = 3;

#[derive(Parser)]
#[command(
    name = "wopt",
    version,
    about = "Feature-whitening optimizer experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one configuration and write metrics.csv and summary.json.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Worker threads; overrides the config, 0 = all cores.
        #[arg(long)]
        threads: Option<usize>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Write a synthetic data set in WOPT1 format.
    GenData {
        #[arg(long)]
        spec: PathBuf,
        /// Training split.
        #[arg(long)]
        out: PathBuf,
        /// Test split; skipped when absent.
        #[arg(long)]
        test_out: Option<PathBuf>,
    },
    /// Run an oracle suite: equivalence, recursiveq, whitening or all.
    Verify { suite: String },
}

/// Failure classes, mapped to exit codes in `main`.
enum Failure {
    Config(anyhow::Error),
    Numeric(anyhow::Error),
    Other(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Other(e)
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            config,
            threads,
            out,
        } => run(&config, threads, &out),
        Command::GenData {
            spec,
            out,
            test_out,
        } => gen_data(&spec, &out, test_out.as_deref()),
        Command::Verify { suite } => return verify(&suite),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("config error: {e:#}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Numeric(e)) => {
            eprintln!("numeric failure: {e:#}");
            ExitCode::from(EXIT_NUMERIC)
        }
        Err(Failure::Other(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn load_config(path: &Path) -> Result<RunConfig, Failure> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(Failure::Config)?;
    let seed = match std::env::var("WOPT_SEED") {
        Ok(v) => Some(
            v.trim()
                .parse::<u64>()
                .with_context(|| format!("WOPT_SEED `{v}` is not an unsigned integer"))
                .map_err(Failure::Config)?,
        ),
        Err(_) => None,
    };
    parse_run_config(&text, seed)
        .with_context(|| format!("in {}", path.display()))
        .map_err(Failure::Config)
}

fn check_architecture(
    choice: ArchChoice,
    cfg: &ExperimentConfig,
    train: &Dataset,
) -> Result<(), Failure> {
    let arch = cfg
        .architecture(train)
        .map_err(|e| Failure::Config(e.into()))?;
    let ok = match choice {
        ArchChoice::Auto => true,
        ArchChoice::Mlp => matches!(arch, Architecture::Mlp { .. }),
        ArchChoice::Convnet => matches!(arch, Architecture::Convnet { .. }),
    };
    if ok {
        Ok(())
    } else {
        Err(Failure::Config(anyhow::anyhow!(
            "architecture {choice:?} does not fit samples of shape {:?}",
            train.sample_shape()
        )))
    }
}

#[cfg(feature = "parallel")]
fn set_threads(threads: usize) -> anyhow::Result<()> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .context("building the worker pool")
}

#[cfg(not(feature = "parallel"))]
fn set_threads(threads: usize) -> anyhow::Result<()> {
    if threads > 1 {
        log::warn!("built without the `parallel` feature; running on one thread");
    }
    Ok(())
}

#[derive(Serialize)]
struct Summary<'a> {
    config: &'a ExperimentConfig,
    #[serde(flatten)]
    result: &'a ExperimentSummary,
}

fn run(path: &Path, threads: Option<usize>, out: &Path) -> Result<(), Failure> {
    let cfg = load_config(path)?;
    let threads = threads.unwrap_or(cfg.threads);
    set_threads(threads)?;
    let exp = &cfg.experiment;
    let (train, test) = exp
        .data
        .load()
        .context("loading the data set")
        .map_err(Failure::Config)?;
    check_architecture(cfg.architecture, exp, &train)?;

    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let csv_path = out.join("metrics.csv");
    let mut csv = BufWriter::new(
        File::create(&csv_path).with_context(|| format!("creating {}", csv_path.display()))?,
    );
    writeln!(csv, "{}", MetricsRecord::CSV_HEADER).context("writing metrics.csv")?;
    let mut write_err = None;
    let outcome = run_experiment(exp, &train, &test, |rec| {
        if write_err.is_none() {
            if let Err(e) = writeln!(csv, "{}", rec.to_csv_row()).and_then(|_| csv.flush()) {
                write_err = Some(e);
            }
        }
    });
    csv.flush().context("writing metrics.csv")?;
    if let Some(e) = write_err {
        return Err(anyhow::Error::new(e).context("writing metrics.csv").into());
    }
    let summary = match outcome {
        Ok(s) => s,
        Err(e) if e.is_numeric() => return Err(Failure::Numeric(e.into())),
        Err(e) => return Err(Failure::Other(e.into())),
    };

    let json = serde_json::to_string_pretty(&Summary {
        config: exp,
        result: &summary,
    })
    .context("serializing the summary")?;
    fs::write(out.join("summary.json"), json + "\n").context("writing summary.json")?;
    println!(
        "{} seed {}: {} steps, final loss {:.4}, test accuracy {:.4}",
        summary.method,
        summary.seed,
        summary.steps,
        summary.final_train_loss,
        summary.final_test_acc
    );
    Ok(())
}

fn gen_data(spec_path: &Path, out: &Path, test_out: Option<&Path>) -> Result<(), Failure> {
    let text = fs::read_to_string(spec_path)
        .with_context(|| format!("reading {}", spec_path.display()))
        .map_err(Failure::Config)?;
    let spec = parse_synthetic_spec(&text)
        .with_context(|| format!("in {}", spec_path.display()))
        .map_err(Failure::Config)?;
    let data = gen_synthetic(&spec).context("generating data")?;
    let write = |path: &Path, ds: &Dataset| -> anyhow::Result<()> {
        let mut w = BufWriter::new(
            File::create(path).with_context(|| format!("creating {}", path.display()))?,
        );
        write_wopt(&mut w, ds)?;
        w.flush()?;
        Ok(())
    };
    write(out, &data.train)?;
    if let Some(path) = test_out {
        write(path, &data.test)?;
    }
    Ok(())
}

fn verify(name: &str) -> ExitCode {
    let suites: Vec<Suite> = if name == "all" {
        Suite::ALL.to_vec()
    } else {
        match name.parse() {
            Ok(s) => vec![s],
            Err(e) => {
                eprintln!("{e}; expected one of equivalence, recursiveq, whitening, all");
                return ExitCode::from(EXIT_CONFIG);
            }
        }
    };
    let mut all_passed = true;
    for suite in suites {
        match run_suite(suite) {
            Ok(checks) => {
                for check in checks {
                    all_passed &= check.passed;
                    println!("{suite}: {check}");
                }
            }
            Err(e) => {
                all_passed = false;
                println!("{suite}: FAIL error: {e}");
            }
        }
    }
    if all_passed {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
