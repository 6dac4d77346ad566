//! Experiment orchestration: simulate children, fit, write artifacts.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use ngpm_core::analysis::{
    fit_exponential, fit_superexponential, select_fit_window, series_from_records, MIN_FIT_POINTS,
};
use ngpm_core::evolution::{evolve_trajectory, ObserverSet};
use ngpm_core::grid::{make_gaussian, make_grid};
use ngpm_core::observables::{run_loschmidt_experiment, run_pair_experiment};
use ngpm_core::{
    FitError, FitModel, FitResult, GridError, GuardKind, ObservableRecord, SeriesPoint, Trajectory,
    WindowBounds,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::{info, warn};

use crate::config::{ChildConfig, ConfigError, ExperimentConfig, Mode};
use crate::csv_io;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("cannot build initial state: {0}")]
    Setup(#[from] GridError),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot write {path}: {message}")]
    Serialize { path: PathBuf, message: String },
    #[error("cannot start worker pool: {0}")]
    Pool(String),
}

impl RunError {
    /// Process exit code: 1 for configuration problems, 2 for I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) | RunError::Setup(_) | RunError::Pool(_) => 1,
            RunError::Io { .. } | RunError::Serialize { .. } => 2,
        }
    }
}

pub(crate) fn io_error(path: &Path) -> impl FnOnce(std::io::Error) -> RunError + '_ {
    move |source| RunError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Column a mode's growth fits are made on.
pub fn fit_column(mode: Mode) -> fn(&ObservableRecord) -> Option<f64> {
    match mode {
        Mode::Distance => |r| r.distance,
        Mode::Loschmidt => |r| r.one_minus_le,
        Mode::Energy => |r| Some(r.mean_p2),
    }
}

/// Small-parameter scale `s` of the fitted series: `(eps/hbar)^2` for the
/// distance, `(delta_g/hbar)^2` for the echo, 1 for the energy.
pub fn series_scale(config: &ExperimentConfig) -> f64 {
    match config.mode {
        Mode::Distance => (config.epsilon / config.hbar).powi(2),
        Mode::Loschmidt => (config.g_perturbation() / config.hbar).powi(2),
        Mode::Energy => 1.0,
    }
}

/// Default window bounds for `model`, with the fit request's overrides.
pub fn window_bounds(config: &ExperimentConfig, model: FitModel) -> WindowBounds {
    let s = series_scale(config);
    let mut bounds = match (config.mode, model) {
        (Mode::Energy, FitModel::Exponential) => WindowBounds {
            y_min: 0.0,
            y_max: f64::INFINITY,
            ..WindowBounds::for_distance(s)
        },
        (Mode::Energy, FitModel::Superexponential) => WindowBounds {
            y_max: f64::INFINITY,
            ..WindowBounds::for_superexponential(s, config.g)
        },
        (_, FitModel::Exponential) => WindowBounds::for_distance(s),
        (_, FitModel::Superexponential) => WindowBounds::for_superexponential(s, config.g),
    };
    if let Some(y) = config.fit.y_min {
        bounds.y_min = y;
    }
    if let Some(y) = config.fit.y_max {
        bounds.y_max = y;
    }
    bounds.skip_initial = config.fit.skip_initial;
    bounds
}

/// Fits `model` over the auto-selected window of `series`.
pub fn fit_series(
    series: &[SeriesPoint],
    config: &ExperimentConfig,
    model: FitModel,
) -> Result<FitResult, FitError> {
    let window = select_fit_window(series, &window_bounds(config, model))?;
    match model {
        FitModel::Exponential => fit_exponential(series, window),
        FitModel::Superexponential => {
            fit_superexponential(series, series_scale(config), config.g, window)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitOutcome {
    pub model: FitModel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub result: Option<FitResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl FitOutcome {
    fn from_result(model: FitModel, r: Result<FitResult, FitError>) -> Self {
        match r {
            Ok(result) => Self {
                model,
                result: Some(result),
                error: None,
            },
            Err(e) => Self {
                model,
                result: None,
                error: Some(e.to_string()),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuardEvent {
    pub kick_index: usize,
    pub kind: GuardKind,
    pub grid_points: usize,
}

/// A simulated child with its fits, before anything touches the disk.
#[derive(Debug, Clone)]
pub struct ChildOutcome {
    pub trajectory: Trajectory,
    /// Grids that were abandoned because truncation hit before the fit window.
    pub escalations: Vec<GuardEvent>,
    pub fits: Vec<FitOutcome>,
}

impl ChildOutcome {
    pub fn fit(&self, model: FitModel) -> Option<&FitResult> {
        self.fits
            .iter()
            .find(|f| f.model == model)
            .and_then(|f| f.result.as_ref())
    }
}

fn simulate_on(config: &ExperimentConfig, grid_points: usize) -> Result<Trajectory, RunError> {
    let grid = make_grid(grid_points)?;
    let initial = make_gaussian(&grid, config.sigma, config.center)?;
    let params = config.params();
    params.validate()?;
    Ok(match config.mode {
        Mode::Distance => run_pair_experiment(
            &initial,
            &params,
            config.epsilon,
            config.n_kicks,
            &config.guards,
        ),
        Mode::Loschmidt => run_loschmidt_experiment(
            &initial,
            &params,
            config.g_perturbation(),
            config.epsilon,
            config.n_kicks,
            &config.guards,
        ),
        Mode::Energy => evolve_trajectory(
            &initial,
            &params,
            config.n_kicks,
            &config.guards,
            &ObserverSet {
                fotoc_epsilon: config.epsilon,
            },
        ),
    })
}

/// Runs one child. A truncation that leaves fewer than
/// `skip_initial + MIN_FIT_POINTS` kicks doubles the grid, up to
/// `max_grid_points`.
pub fn simulate(config: &ExperimentConfig) -> Result<ChildOutcome, RunError> {
    let needed = config.fit.skip_initial + MIN_FIT_POINTS;
    let mut grid_points = config.grid_points;
    let mut escalations = Vec::new();
    let trajectory = loop {
        let trajectory = simulate_on(config, grid_points)?;
        match trajectory.termination {
            Some(t)
                if t.kind == GuardKind::Truncation
                    && t.kick_index < needed
                    && t.kick_index < config.n_kicks
                    && grid_points < config.max_grid_points =>
            {
                warn!(
                    grid_points,
                    kick = t.kick_index,
                    "truncation before the fit window, doubling the grid"
                );
                escalations.push(GuardEvent {
                    kick_index: t.kick_index,
                    kind: t.kind,
                    grid_points,
                });
                grid_points *= 2;
            }
            _ => break trajectory,
        }
    };
    let series = series_from_records(&trajectory.records, fit_column(config.mode));
    let fits = config
        .fit
        .models
        .iter()
        .map(|&model| FitOutcome::from_result(model, fit_series(&series, config, model)))
        .collect();
    Ok(ChildOutcome {
        trajectory,
        escalations,
        fits,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySummary {
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep_value: Option<f64>,
    pub csv: String,
    pub grid_points: usize,
    pub n_records: usize,
    pub completed_kicks: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub termination: Option<GuardEvent>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub escalations: Vec<GuardEvent>,
    pub fits: Vec<FitOutcome>,
}

/// Fitted rate per sweep value and model; failed fits keep their error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatePoint {
    pub value: f64,
    pub model: FitModel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_squared: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateTable {
    pub parameter: String,
    pub points: Vec<RatePoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub schema_version: u32,
    pub run_id: String,
    pub config: ExperimentConfig,
    pub trajectories: Vec<TrajectorySummary>,
    pub guard_events: Vec<GuardEvent>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rates: Option<RateTable>,
    pub wall_time_seconds: f64,
}

fn summarize(child: &ChildConfig, outcome: &ChildOutcome, csv: String) -> TrajectorySummary {
    let t = &outcome.trajectory;
    TrajectorySummary {
        label: child.label.clone(),
        sweep_value: child.sweep_value,
        csv,
        grid_points: t.grid_points,
        n_records: t.records.len(),
        completed_kicks: t.completed_kicks(),
        termination: t.termination.map(|term| GuardEvent {
            kick_index: term.kick_index,
            kind: term.kind,
            grid_points: t.grid_points,
        }),
        escalations: outcome.escalations.clone(),
        fits: outcome.fits.clone(),
    }
}

/// Runs every child of `config` on `workers` threads and writes
/// `<output_dir>/<run_id>/` with one CSV per child plus `summary.json`.
pub fn run(
    config: &ExperimentConfig,
    run_id: &str,
    workers: usize,
) -> Result<RunSummary, RunError> {
    config.validate()?;
    let started = Instant::now();
    let dir = config.output_dir.join(run_id);
    fs::create_dir_all(&dir).map_err(io_error(&dir))?;

    let children = config.children();
    info!(run_id, children = children.len(), workers, "starting run");
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| RunError::Pool(e.to_string()))?;
    let mut trajectories: Vec<TrajectorySummary> = pool.install(|| {
        children
            .par_iter()
            .map(|child| {
                let outcome = simulate(&child.config)?;
                let name = format!("{}.csv", child.label);
                csv_io::write_records(&dir.join(&name), &outcome.trajectory.records)?;
                Ok(summarize(child, &outcome, name))
            })
            .collect::<Result<_, RunError>>()
    })?;
    trajectories.sort_by(|a, b| {
        a.sweep_value
            .partial_cmp(&b.sweep_value)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.label.cmp(&b.label))
    });

    let guard_events = trajectories
        .iter()
        .flat_map(|t| t.escalations.iter().chain(t.termination.as_ref()).cloned())
        .collect();
    let rates = config.sweep.as_ref().map(|sweep| RateTable {
        parameter: sweep.parameter.to_string(),
        points: trajectories
            .iter()
            .flat_map(|t| {
                t.fits.iter().map(move |f| RatePoint {
                    value: t.sweep_value.unwrap_or(f64::NAN),
                    model: f.model,
                    rate: f.result.map(|r| r.rate),
                    r_squared: f.result.map(|r| r.r_squared),
                    error: f.error.clone(),
                })
            })
            .collect(),
    });

    let summary = RunSummary {
        schema_version: SCHEMA_VERSION,
        run_id: run_id.to_string(),
        config: config.clone(),
        trajectories,
        guard_events,
        rates,
        wall_time_seconds: started.elapsed().as_secs_f64(),
    };
    let path = dir.join("summary.json");
    let text = serde_json::to_string_pretty(&summary).map_err(|e| RunError::Serialize {
        path: path.clone(),
        message: e.to_string(),
    })?;
    fs::write(&path, text).map_err(io_error(&path))?;
    info!(path = %path.display(), "summary written");
    Ok(summary)
}
