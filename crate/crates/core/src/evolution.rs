//! One-period Floquet map: nonlinear complex kick followed by free rotation.
//!
//! The kick multiplies the physical wavefunction by
//! `exp[-i (g + i eta) rho / hbar]`, where `rho = e^{2L} |psi_hat|^2` is the
//! pre-kick physical density. The free step multiplies `c_n` by
//! `exp(-i hbar n^2 / 2)`. Both factors are applied exactly, so there is no
//! time-step error.

use std::sync::Arc;

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{ModelParams, SpatialGrid, WaveState};
use crate::observables::{measure_single, ObservableRecord};

/// Fraction of the momentum modes (largest `|n|`) that count as the grid edge.
pub const EDGE_BAND_FRACTION: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvolutionGuards {
    /// Largest tolerated probability in the outer 10% of momentum modes.
    pub edge_fraction_max: f64,
    /// Overflow bound on the log amplitude `L`.
    pub max_log_amplitude: f64,
}

impl Default for EvolutionGuards {
    fn default() -> Self {
        Self {
            edge_fraction_max: 1e-8,
            max_log_amplitude: 300.0,
        }
    }
}

impl EvolutionGuards {
    pub fn validate(&self) -> Result<(), String> {
        for (name, v) in [
            ("edge_fraction_max", self.edge_fraction_max),
            ("max_log_amplitude", self.max_log_amplitude),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(format!("guard {name} must be positive and finite, got {v}"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GuardKind {
    Overflow,
    Truncation,
}

impl std::fmt::Display for GuardKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            GuardKind::Overflow => f.write_str("overflow"),
            GuardKind::Truncation => f.write_str("truncation"),
        }
    }
}

/// A guard tripped. The state reached by the offending step is kept so the
/// trajectory can record it as its flagged final row.
#[derive(Debug, Clone, Error)]
pub enum EvolutionError {
    #[error("log amplitude {log_amplitude} exceeds the overflow guard")]
    Overflow {
        log_amplitude: f64,
        state: Box<WaveState>,
    },
    #[error("edge-mode probability {edge_mass:e} exceeds the truncation guard")]
    Truncation {
        edge_mass: f64,
        state: Box<WaveState>,
    },
}

impl EvolutionError {
    pub fn kind(&self) -> GuardKind {
        match self {
            EvolutionError::Overflow { .. } => GuardKind::Overflow,
            EvolutionError::Truncation { .. } => GuardKind::Truncation,
        }
    }

    pub fn into_state(self) -> WaveState {
        match self {
            EvolutionError::Overflow { state, .. } | EvolutionError::Truncation { state, .. } => {
                *state
            }
        }
    }
}

/// Multiplies the physical wavefunction by the complex nonlinear kick and
/// folds the gained norm into the log amplitude.
pub fn apply_kick(
    state: &WaveState,
    params: &ModelParams,
    guards: &EvolutionGuards,
) -> Result<WaveState, EvolutionError> {
    let kicked = kick_unguarded(state, params);
    if kicked.log_amplitude() > guards.max_log_amplitude {
        return Err(EvolutionError::Overflow {
            log_amplitude: kicked.log_amplitude(),
            state: Box::new(kicked),
        });
    }
    Ok(kicked)
}

fn kick_unguarded(state: &WaveState, params: &ModelParams) -> WaveState {
    let density_weight = (2.0 * state.log_amplitude()).exp();
    let inv_hbar = params.hbar_eff.recip();
    let amplitudes = state.amplitudes();

    // Gain exponents eta*rho/hbar can be huge; subtract their maximum so the
    // stored amplitudes stay bounded and the offset goes into L instead.
    let offset = if params.eta == 0.0 {
        0.0
    } else {
        amplitudes
            .iter()
            .map(|z| params.eta * density_weight * z.norm_sqr() * inv_hbar)
            .fold(0.0, f64::max)
    };

    let kicked = amplitudes
        .iter()
        .map(|&z| {
            let rho = density_weight * z.norm_sqr();
            let gain = (params.eta * rho * inv_hbar - offset).exp();
            z * Complex64::from_polar(gain, -params.g * rho * inv_hbar)
        })
        .collect();
    if params.eta == 0.0 {
        return rebuild(state, kicked);
    }
    WaveState::from_parts(state.grid().clone(), kicked, state.log_amplitude() + offset)
        .expect("kick keeps at least the peak amplitude")
}

/// Free rotation `exp(-i p^2 / (2 hbar))`, diagonal in momentum.
pub fn apply_free(state: &WaveState, params: &ModelParams) -> WaveState {
    let grid = state.grid();
    let mut buf = state.amplitudes().to_vec();
    grid.apply_momentum_diagonal(&mut buf, |n| free_phase(n, params.hbar_eff));
    rebuild(state, buf)
}

#[inline]
fn free_phase(n: i64, hbar_eff: f64) -> Complex64 {
    let n = n as f64;
    Complex64::from_polar(1.0, -0.5 * hbar_eff * n * n)
}

/// Renormalizes the output of a unitary step; the physical norm is unchanged
/// by construction, so rounding in the stored norm is not folded into `L`.
fn rebuild(template: &WaveState, amplitudes: Vec<Complex64>) -> WaveState {
    WaveState::from_parts(template.grid().clone(), amplitudes, 0.0)
        .expect("unitary step preserves a nonzero norm")
        .with_log_amplitude(template.log_amplitude())
}

/// Probability in the outer [`EDGE_BAND_FRACTION`] of momentum modes.
pub fn check_truncation(state: &WaveState) -> f64 {
    let grid = state.grid();
    let mut buf = state.amplitudes().to_vec();
    grid.fft_forward(&mut buf);
    edge_mass_of_spectrum(grid, &buf)
}

/// Edge mass computed from a raw (any normalization) FFT spectrum.
pub(crate) fn edge_mass_of_spectrum(grid: &SpatialGrid, spectrum: &[Complex64]) -> f64 {
    let cutoff = edge_cutoff(grid.n_points());
    let mut edge = 0.0;
    let mut total = 0.0;
    for (k, z) in spectrum.iter().enumerate() {
        let p = z.norm_sqr();
        total += p;
        if grid.fft_index_to_mode(k).unsigned_abs() as f64 > cutoff {
            edge += p;
        }
    }
    if total > 0.0 {
        edge / total
    } else {
        0.0
    }
}

/// Modes with `|n| > cutoff` form the edge band.
#[inline]
pub(crate) fn edge_cutoff(n_points: usize) -> f64 {
    (1.0 - EDGE_BAND_FRACTION) * (n_points / 2) as f64
}

/// Floquet map with the free-rotation phases precomputed for one grid and
/// parameter set.
#[derive(Debug, Clone)]
pub struct FloquetPropagator {
    grid: Arc<SpatialGrid>,
    params: ModelParams,
    guards: EvolutionGuards,
    free_phases: Vec<Complex64>,
}

/// Successful step: the new state and its edge-mode probability.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub state: WaveState,
    pub edge_mass: f64,
}

impl FloquetPropagator {
    pub fn new(grid: Arc<SpatialGrid>, params: ModelParams, guards: EvolutionGuards) -> Self {
        let free_phases = (0..grid.n_points())
            .map(|k| free_phase(grid.fft_index_to_mode(k), params.hbar_eff))
            .collect();
        Self {
            grid,
            params,
            guards,
            free_phases,
        }
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn guards(&self) -> &EvolutionGuards {
        &self.guards
    }

    /// Kick, then free rotation, then the guard checks.
    pub fn step(&self, state: &WaveState) -> Result<StepOutcome, EvolutionError> {
        assert_eq!(
            state.grid().n_points(),
            self.grid.n_points(),
            "state and propagator grids differ"
        );
        let kicked = kick_unguarded(state, &self.params);
        let mut buf = kicked.amplitudes().to_vec();
        self.grid.fft_forward(&mut buf);
        for (z, phase) in buf.iter_mut().zip(&self.free_phases) {
            *z *= phase;
        }
        let edge_mass = edge_mass_of_spectrum(&self.grid, &buf);
        self.grid.fft_inverse(&mut buf);
        let next = rebuild(&kicked, buf);

        if next.log_amplitude() > self.guards.max_log_amplitude {
            return Err(EvolutionError::Overflow {
                log_amplitude: next.log_amplitude(),
                state: Box::new(next),
            });
        }
        if edge_mass > self.guards.edge_fraction_max {
            return Err(EvolutionError::Truncation {
                edge_mass,
                state: Box::new(next),
            });
        }
        Ok(StepOutcome {
            state: next,
            edge_mass,
        })
    }
}

/// One Floquet period `U = free . kick`.
pub fn floquet_step(
    state: &WaveState,
    params: &ModelParams,
    guards: &EvolutionGuards,
) -> Result<WaveState, EvolutionError> {
    FloquetPropagator::new(state.grid().clone(), *params, *guards)
        .step(state)
        .map(|outcome| outcome.state)
}

/// Which observables a single-state trajectory records.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObserverSet {
    /// Translation used for the FOTOC column.
    pub fotoc_epsilon: f64,
}

impl Default for ObserverSet {
    fn default() -> Self {
        Self {
            fotoc_epsilon: 1e-5,
        }
    }
}

/// Where and why a trajectory stopped before its requested kick count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Termination {
    pub kick_index: usize,
    pub kind: GuardKind,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub params: ModelParams,
    pub grid_points: usize,
    pub guards: EvolutionGuards,
    pub records: Vec<ObservableRecord>,
    pub final_state: WaveState,
    /// Second state of a pair or Loschmidt experiment.
    pub partner_final_state: Option<WaveState>,
    pub termination: Option<Termination>,
}

impl Trajectory {
    pub fn completed_kicks(&self) -> usize {
        self.records.last().map_or(0, |r| r.kick_index)
    }
}

/// Result of stepping a state with guard errors folded into a flag.
pub(crate) struct FlaggedStep {
    pub state: WaveState,
    pub edge_mass: f64,
    pub guard: Option<GuardKind>,
}

pub(crate) fn step_flagged(prop: &FloquetPropagator, state: &WaveState) -> FlaggedStep {
    match prop.step(state) {
        Ok(StepOutcome { state, edge_mass }) => FlaggedStep {
            state,
            edge_mass,
            guard: None,
        },
        Err(err) => {
            let guard = Some(err.kind());
            let state = err.into_state();
            let edge_mass = check_truncation(&state);
            FlaggedStep {
                state,
                edge_mass,
                guard,
            }
        }
    }
}

/// Evolves `initial` for up to `n_kicks` periods, recording observables at
/// `t = 0` and after every kick. A tripped guard ends the run with a flagged
/// final record instead of an error.
pub fn evolve_trajectory(
    initial: &WaveState,
    params: &ModelParams,
    n_kicks: usize,
    guards: &EvolutionGuards,
    observers: &ObserverSet,
) -> Trajectory {
    let prop = FloquetPropagator::new(initial.grid().clone(), *params, *guards);
    let hbar = params.hbar_eff;
    let mut records = Vec::with_capacity(n_kicks + 1);
    records.push(measure_single(0, initial, hbar, observers.fotoc_epsilon));

    let mut state = initial.clone();
    let mut termination = None;
    for t in 1..=n_kicks {
        let step = step_flagged(&prop, &state);
        state = step.state;
        let mut record = measure_single(t, &state, hbar, observers.fotoc_epsilon);
        record.terminated = step.guard;
        records.push(record);
        if let Some(kind) = step.guard {
            termination = Some(Termination {
                kick_index: t,
                kind,
            });
            break;
        }
    }

    Trajectory {
        params: *params,
        grid_points: initial.grid().n_points(),
        guards: *guards,
        records,
        final_state: state,
        partner_final_state: None,
        termination,
    }
}
