//! Onset of norm growth for a configured experiment.

use ngpm_core::analysis::{estimate_eta_c, norm_growth_slope, EtaCEstimate, EtaCOptions};
use ngpm_core::evolution::{evolve_trajectory, ObserverSet};
use ngpm_core::grid::{make_gaussian, make_grid};
use ngpm_core::FitError;

use crate::config::ExperimentConfig;

/// Late-time `log_norm` slope of a single-state run at `eta`.
pub fn norm_slope(config: &ExperimentConfig, eta: f64) -> Result<f64, String> {
    let grid = make_grid(config.grid_points).map_err(|e| e.to_string())?;
    let initial = make_gaussian(&grid, config.sigma, config.center).map_err(|e| e.to_string())?;
    let params = ngpm_core::ModelParams {
        eta,
        ..config.params()
    };
    let traj = evolve_trajectory(
        &initial,
        &params,
        config.n_kicks,
        &config.guards,
        &ObserverSet {
            fotoc_epsilon: config.epsilon,
        },
    );
    norm_growth_slope(&traj.records).map_err(|e| e.to_string())
}

/// Threshold estimate of `eta_c` over `eta_values`, everything else from `config`.
pub fn estimate_for_config(
    config: &ExperimentConfig,
    eta_values: &[f64],
    options: &EtaCOptions,
) -> Result<EtaCEstimate, FitError> {
    estimate_eta_c(eta_values, options, |eta| norm_slope(config, eta))
}
