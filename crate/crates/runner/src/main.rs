use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ngpm_core::analysis::{
    fit_exponential, fit_superexponential, select_fit_window, EtaCOptions, DEFAULT_SKIP_INITIAL,
};
use ngpm_core::{FitWindow, WindowBounds};
use ngpm_runner::config::{load_config, ConfigError, ExperimentConfig};
use ngpm_runner::{csv_io, eta_c, presets, run, RunError};
use tracing_subscriber::EnvFilter;

#[derive(Parser)]
#[command(
    name = "ngpm",
    version,
    about = "Kicked non-Hermitian Gross-Pitaevskii map simulator"
)]
struct Cli {
    /// Configuration file (TOML, or JSON by extension).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides `output_dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Concurrent sweep children.
    #[arg(long, global = true, default_value_t = 1)]
    workers: usize,
    /// `key=value` config override, repeatable; dotted keys reach tables.
    #[arg(long = "override", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a single trajectory.
    Simulate {
        /// Subdirectory of the output directory; defaults to the config name.
        #[arg(long)]
        run_id: Option<String>,
    },
    /// Run one child per sweep value.
    Sweep {
        #[arg(long)]
        run_id: Option<String>,
    },
    /// Fit one column of a trajectory CSV and print the result as JSON.
    Fit {
        csv: PathBuf,
        #[arg(long, default_value = "D")]
        column: String,
        #[arg(long, value_enum, default_value = "exponential")]
        model: ModelArg,
        /// Small-parameter scale `s` of the superexponential model.
        #[arg(long, default_value_t = 1e-10)]
        scale: f64,
        #[arg(long, default_value_t = 1.0)]
        g: f64,
        #[arg(long)]
        y_min: Option<f64>,
        #[arg(long)]
        y_max: Option<f64>,
        #[arg(long, default_value_t = DEFAULT_SKIP_INITIAL)]
        skip_initial: usize,
        /// Explicit window start; needs `--end`.
        #[arg(long, requires = "end")]
        start: Option<usize>,
        #[arg(long, requires = "start")]
        end: Option<usize>,
    },
    /// Run a named figure preset (fig1a, fig1b, fig1c, fig2).
    Preset { name: String },
    /// Estimate the norm-growth onset eta_c from the config's parameters.
    EtaC {
        /// Ascending eta probes, comma separated.
        #[arg(long, value_delimiter = ',', required = true)]
        etas: Vec<f64>,
        #[arg(long, default_value_t = 1e-3)]
        threshold: f64,
        #[arg(long)]
        resolution: Option<f64>,
    },
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum ModelArg {
    Exponential,
    Superexponential,
}

enum Failure {
    Config(String),
    Io(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Io { .. } => Failure::Io(e.to_string()),
            other => Failure::Config(other.to_string()),
        }
    }
}

impl From<RunError> for Failure {
    fn from(e: RunError) -> Self {
        match e.exit_code() {
            1 => Failure::Config(e.to_string()),
            _ => Failure::Io(e.to_string()),
        }
    }
}

fn configured(cli: &Cli) -> Result<ExperimentConfig, Failure> {
    let mut config = load_config(cli.config.as_deref(), &cli.overrides)?;
    if let Some(out) = &cli.out {
        config.output_dir = out.clone();
    }
    Ok(config)
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Failure::Io(e.to_string()))?;
    println!("{text}");
    Ok(())
}

fn execute(cli: &Cli) -> Result<(), Failure> {
    match &cli.command {
        Command::Simulate { run_id } => {
            let config = configured(cli)?;
            if config.sweep.is_some() {
                return Err(Failure::Config(
                    "config has a sweep; use the `sweep` subcommand".into(),
                ));
            }
            let id = run_id.clone().unwrap_or_else(|| config.name.clone());
            let summary = run(&config, &id, 1)?;
            print_json(&summary.trajectories)
        }
        Command::Sweep { run_id } => {
            let config = configured(cli)?;
            if config.sweep.is_none() {
                return Err(Failure::Config(
                    "invalid `sweep`: missing sweep axis".into(),
                ));
            }
            let id = run_id.clone().unwrap_or_else(|| config.name.clone());
            let summary = run(&config, &id, cli.workers)?;
            print_json(&summary.rates)
        }
        Command::Fit {
            csv,
            column,
            model,
            scale,
            g,
            y_min,
            y_max,
            skip_initial,
            start,
            end,
        } => {
            let series = csv_io::read_column(csv, column)?;
            let mut bounds = match model {
                ModelArg::Exponential => WindowBounds::for_distance(*scale),
                ModelArg::Superexponential => WindowBounds::for_superexponential(*scale, *g),
            };
            bounds.y_min = y_min.unwrap_or(bounds.y_min);
            bounds.y_max = y_max.unwrap_or(bounds.y_max);
            bounds.skip_initial = *skip_initial;
            let window = match (start, end) {
                (Some(s), Some(e)) => Ok(FitWindow::new(*s, *e)),
                _ => select_fit_window(&series, &bounds),
            };
            let fit = window.and_then(|w| match model {
                ModelArg::Exponential => fit_exponential(&series, w),
                ModelArg::Superexponential => fit_superexponential(&series, *scale, *g, w),
            });
            match fit {
                Ok(result) => print_json(&result),
                Err(e) => Err(Failure::Config(format!("fit of `{column}` failed: {e}"))),
            }
        }
        Command::Preset { name } => {
            let configs = presets::preset(name).ok_or_else(|| {
                Failure::Config(format!(
                    "unknown preset `{name}`, expected one of {}",
                    presets::PRESET_NAMES.join(", ")
                ))
            })?;
            let root = cli.out.clone().unwrap_or_else(|| "results".into());
            let mut all = Vec::new();
            for mut config in configs {
                config.output_dir = root.join(name);
                let summary = run(&config, &config.name.clone(), cli.workers)?;
                all.push((config.name, summary.rates));
            }
            print_json(&all)
        }
        Command::EtaC {
            etas,
            threshold,
            resolution,
        } => {
            let config = configured(cli)?;
            let options = EtaCOptions {
                slope_threshold: *threshold,
                resolution: resolution.unwrap_or(f64::INFINITY),
            };
            let estimate = eta_c::estimate_for_config(&config, etas, &options)
                .map_err(|e| Failure::Config(e.to_string()))?;
            print_json(&estimate)
        }
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| "warn".into()))
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(message)) => {
            eprintln!("error: {message}");
            ExitCode::from(1)
        }
        Err(Failure::Io(message)) => {
            eprintln!("error: {message}");
            ExitCode::from(2)
        }
    }
}
