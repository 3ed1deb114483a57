use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use polb::experiment::{render_summary, run_experiment, summarize, sweep, write_summary, ExperimentConfig};
use polb::inference::{fit_exponential, load_trace, GammaPosterior};
use polb::stats::fmt_sig9;

#[derive(Parser)]
#[command(name = "polb", version, about = "Load balancing with delayed acknowledgements")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment described by a TOML file.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Replace a config key, e.g. `t_e=500` or `planner.n_simulations=100`.
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Recompute the summary from the CSVs of one or more result directories.
    Summarize {
        #[arg(required = true)]
        dirs: Vec<PathBuf>,
        /// Also write the combined summary to this CSV file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Repeat an experiment at several offered loads.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        eta: Vec<f64>,
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Fit an exponential arrival model to a trace of inter-arrival times.
    Fit {
        #[arg(long)]
        trace: PathBuf,
        /// Column to read when the trace is a CSV with a header row.
        #[arg(long)]
        column: Option<String>,
        #[arg(long, default_value_t = 1.0)]
        prior_alpha: f64,
        #[arg(long, default_value_t = 1.0)]
        prior_beta: f64,
    },
}

fn load(config: &Path, overrides: &[String], workers: Option<usize>) -> polb::Result<ExperimentConfig> {
    let mut c = ExperimentConfig::load(config, overrides)?;
    if workers.is_some() {
        c.workers = workers;
        c.validate()?;
    }
    Ok(c)
}

fn execute(cli: Cli) -> polb::Result<()> {
    match cli.command {
        Command::Run {
            config,
            overrides,
            workers,
        } => {
            let c = load(&config, &overrides, workers)?;
            let result = run_experiment(&c)?;
            println!("eta = {}", fmt_sig9(c.eta()));
            print!("{}", render_summary(&result.summary));
            println!("results written to {}", c.output_dir.display());
        }
        Command::Summarize { dirs, out } => {
            let rows = summarize(&dirs)?;
            print!("{}", render_summary(&rows));
            if let Some(path) = out {
                write_summary(&path, &rows)?;
            }
        }
        Command::Sweep {
            config,
            eta,
            overrides,
            workers,
        } => {
            let c = load(&config, &overrides, workers)?;
            for (eta, rows) in sweep(&c, &eta)? {
                println!("eta = {}", fmt_sig9(eta));
                print!("{}", render_summary(&rows));
            }
        }
        Command::Fit {
            trace,
            column,
            prior_alpha,
            prior_beta,
        } => {
            let data = load_trace(&trace, column.as_deref())?;
            let post = fit_exponential(&data, GammaPosterior::new(prior_alpha, prior_beta)?)?;
            println!("observations = {}", data.len());
            println!("alpha = {}", fmt_sig9(post.alpha));
            println!("beta = {}", fmt_sig9(post.beta));
            println!("rate_mean = {}", fmt_sig9(post.rate_mean()));
            println!("predictive_mean = {}", fmt_sig9(post.predictive_mean()));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
