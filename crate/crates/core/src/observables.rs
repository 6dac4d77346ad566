//! Measurements on evolved states: momentum moments, fidelity, distance,
//! FOTOC and the Loschmidt echo.
//!
//! Every overlap-type quantity divides by both state norms, so the growing
//! physical norm of the non-Hermitian dynamics cancels out.

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::evolution::{
    edge_cutoff, step_flagged, EvolutionGuards, FloquetPropagator, GuardKind, Termination,
    Trajectory,
};
use crate::grid::{inner_product, translate, GridError, ModelParams, WaveState};

/// One row of a trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservableRecord {
    pub kick_index: usize,
    /// `2L`, the log of the physical squared norm.
    pub log_norm: f64,
    pub mean_p: f64,
    pub mean_p2: f64,
    /// `D = 1 - |<psi|phi>|^2`, only when a translated partner is evolved.
    pub distance: Option<f64>,
    pub one_minus_fotoc: f64,
    pub one_minus_le: Option<f64>,
    pub edge_mass: f64,
    pub terminated: Option<GuardKind>,
}

/// Normalized momentum moments `<p>` and `<p^2>`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentumMoments {
    pub mean_p: f64,
    pub mean_p2: f64,
}

impl MomentumMoments {
    pub fn variance(&self) -> f64 {
        self.mean_p2 - self.mean_p * self.mean_p
    }
}

/// Momentum distribution `|c_n|^2 / sum |c_n|^2` in raw FFT order, paired
/// with the mode numbers.
struct Spectrum {
    modes: Vec<i64>,
    weights: Vec<f64>,
}

fn spectrum(state: &WaveState) -> Spectrum {
    let grid = state.grid();
    let mut buf = state.amplitudes().to_vec();
    grid.fft_forward(&mut buf);
    let mut weights: Vec<f64> = buf.iter().map(|z| z.norm_sqr()).collect();
    let total: f64 = weights.iter().sum();
    for w in weights.iter_mut() {
        *w /= total;
    }
    let modes = (0..grid.n_points())
        .map(|k| grid.fft_index_to_mode(k))
        .collect();
    Spectrum { modes, weights }
}

impl Spectrum {
    /// The Nyquist mode `-N/2` is its own parity partner, so like any odd
    /// spectral derivative `<p>` gives it zero weight; `<p^2>` keeps it.
    fn moments(&self, hbar: f64) -> MomentumMoments {
        let nyquist = -(self.modes.len() as i64 / 2);
        let (mut m1, mut m2) = (0.0, 0.0);
        for (&n, &w) in self.modes.iter().zip(&self.weights) {
            if n != nyquist {
                m1 += w * n as f64;
            }
            m2 += w * (n * n) as f64;
        }
        MomentumMoments {
            mean_p: hbar * m1,
            mean_p2: hbar * hbar * m2,
        }
    }

    /// `1 - |sum_n w_n e^{-i eps n}|^2` without the cancellation of `1 - |z|^2`.
    fn translation_deficit(&self, epsilon: f64) -> f64 {
        let (mut one_minus_re, mut im) = (0.0, 0.0);
        for (&n, &w) in self.modes.iter().zip(&self.weights) {
            let half = 0.5 * epsilon * n as f64;
            let s = half.sin();
            one_minus_re += 2.0 * w * s * s;
            im -= w * (epsilon * n as f64).sin();
        }
        let re = 1.0 - one_minus_re;
        clamp_unit(one_minus_re * (1.0 + re) - im * im)
    }

    fn edge_mass(&self, n_points: usize) -> f64 {
        let cutoff = edge_cutoff(n_points);
        self.modes
            .iter()
            .zip(&self.weights)
            .filter(|(n, _)| n.unsigned_abs() as f64 > cutoff)
            .map(|(_, w)| w)
            .sum()
    }
}

fn clamp_unit(x: f64) -> f64 {
    x.clamp(0.0, 1.0)
}

pub fn momentum_moments(state: &WaveState, hbar_eff: f64) -> MomentumMoments {
    spectrum(state).moments(hbar_eff)
}

/// `<p>` of the normalized state.
pub fn mean_momentum(state: &WaveState, hbar_eff: f64) -> f64 {
    momentum_moments(state, hbar_eff).mean_p
}

/// `<p^2>` of the normalized state (twice the kinetic energy).
pub fn mean_energy(state: &WaveState, hbar_eff: f64) -> f64 {
    momentum_moments(state, hbar_eff).mean_p2
}

/// `|<a|b>|^2 / (<a|a><b|b>)`.
pub fn fidelity(a: &WaveState, b: &WaveState) -> Result<f64, GridError> {
    let ab = inner_product(a, b)?;
    let aa = inner_product(a, a)?.re;
    let bb = inner_product(b, b)?.re;
    Ok(clamp_unit(ab.norm_sqr() / (aa * bb)))
}

/// `D = 1 - fidelity(psi, phi)`, clamped to `[0, 1]`.
///
/// Evaluated as `(1 - |o|)(1 + |o|)` with `1 - |o| = |a - v b|^2 / 2` for the
/// phase `v` aligning the two states, so tiny distances keep full relative
/// precision.
pub fn distance(psi: &WaveState, phi: &WaveState) -> Result<f64, GridError> {
    let dtheta = psi.grid().dtheta();
    let na = psi.stored_norm().sqrt();
    let nb = phi.stored_norm().sqrt();
    let overlap = inner_product(psi, phi)? / (na * nb);
    let magnitude = overlap.norm();
    if magnitude == 0.0 {
        return Ok(1.0);
    }
    let align = overlap.conj() / magnitude;
    let gap: f64 = psi
        .amplitudes()
        .iter()
        .zip(phi.amplitudes())
        .map(|(a, b)| (a / na - align * b / nb).norm_sqr())
        .sum::<f64>()
        * dtheta;
    Ok(clamp_unit(0.5 * gap * (1.0 + magnitude.min(1.0))))
}

/// FOTOC `F_O = |<psi|T(eps)|psi>|^2` for the normalized state.
pub fn fotoc(state: &WaveState, epsilon: f64) -> f64 {
    if epsilon == 0.0 {
        return 1.0;
    }
    fidelity(state, &translate(state, epsilon)).expect("translation keeps the grid")
}

/// `1 - F_O`, evaluated in momentum space where `T(eps)` is diagonal.
pub fn fotoc_deficit(state: &WaveState, epsilon: f64) -> f64 {
    spectrum(state).translation_deficit(epsilon)
}

/// Loschmidt echo `|<psi_eps|psi>|^2` between two normalized states.
pub fn loschmidt_echo(perturbed: &WaveState, reference: &WaveState) -> Result<f64, GridError> {
    fidelity(perturbed, reference)
}

/// Record for a single evolved state (no partner observables).
pub fn measure_single(
    kick_index: usize,
    state: &WaveState,
    hbar_eff: f64,
    fotoc_epsilon: f64,
) -> ObservableRecord {
    let spec = spectrum(state);
    let moments = spec.moments(hbar_eff);
    ObservableRecord {
        kick_index,
        log_norm: 2.0 * state.log_amplitude(),
        mean_p: moments.mean_p,
        mean_p2: moments.mean_p2,
        distance: None,
        one_minus_fotoc: spec.translation_deficit(fotoc_epsilon),
        one_minus_le: None,
        edge_mass: spec.edge_mass(state.grid().n_points()),
        terminated: None,
    }
}

/// Which two-state quantity a pair run records.
#[derive(Clone, Copy)]
enum PairMetric {
    Distance,
    Loschmidt,
}

fn evolve_two(
    first: WaveState,
    second: WaveState,
    prop_first: &FloquetPropagator,
    prop_second: &FloquetPropagator,
    fotoc_epsilon: f64,
    n_kicks: usize,
    metric: PairMetric,
) -> Trajectory {
    let hbar = prop_first.params().hbar_eff;
    let measure = |t: usize, a: &WaveState, b: &WaveState| {
        let mut record = measure_single(t, a, hbar, fotoc_epsilon);
        let value = distance(a, b).expect("pair states share a grid");
        match metric {
            PairMetric::Distance => record.distance = Some(value),
            PairMetric::Loschmidt => record.one_minus_le = Some(value),
        }
        record
    };

    let mut records = Vec::with_capacity(n_kicks + 1);
    records.push(measure(0, &first, &second));
    let (mut a, mut b) = (first, second);
    let mut termination = None;
    for t in 1..=n_kicks {
        let sa = step_flagged(prop_first, &a);
        let sb = step_flagged(prop_second, &b);
        a = sa.state;
        b = sb.state;
        let mut record = measure(t, &a, &b);
        record.edge_mass = sa.edge_mass.max(sb.edge_mass);
        record.terminated = sa.guard.or(sb.guard);
        records.push(record);
        if let Some(kind) = record_guard(&records) {
            termination = Some(Termination {
                kick_index: t,
                kind,
            });
            break;
        }
    }

    Trajectory {
        params: *prop_first.params(),
        grid_points: a.grid().n_points(),
        guards: *prop_first.guards(),
        records,
        final_state: a,
        partner_final_state: Some(b),
        termination,
    }
}

fn record_guard(records: &[ObservableRecord]) -> Option<GuardKind> {
    records.last().and_then(|r| r.terminated)
}

/// Evolves `psi` and `phi = T(-eps) psi` side by side, each with its own
/// density-dependent kick, recording `D` and `1 - F_O` every kick.
pub fn run_pair_experiment(
    initial: &WaveState,
    params: &ModelParams,
    epsilon: f64,
    n_kicks: usize,
    guards: &EvolutionGuards,
) -> Trajectory {
    let prop = FloquetPropagator::new(initial.grid().clone(), *params, *guards);
    let partner = translate(initial, -epsilon);
    evolve_two(
        initial.clone(),
        partner,
        &prop,
        &prop,
        epsilon,
        n_kicks,
        PairMetric::Distance,
    )
}

/// Evolves the same state under `g` and `g + g_perturbation`, recording
/// `1 - L` every kick. `fotoc_epsilon` sets the FOTOC column of the
/// unperturbed state.
pub fn run_loschmidt_experiment(
    initial: &WaveState,
    params: &ModelParams,
    g_perturbation: f64,
    fotoc_epsilon: f64,
    n_kicks: usize,
    guards: &EvolutionGuards,
) -> Trajectory {
    let grid = initial.grid().clone();
    let perturbed = ModelParams {
        g: params.g + g_perturbation,
        ..*params
    };
    let reference = FloquetPropagator::new(grid.clone(), *params, *guards);
    let shifted = FloquetPropagator::new(grid, perturbed, *guards);
    evolve_two(
        initial.clone(),
        initial.clone(),
        &reference,
        &shifted,
        fotoc_epsilon,
        n_kicks,
        PairMetric::Loschmidt,
    )
}

/// `<phi|psi>` normalized by both norms; exposed for the chain identity check.
pub fn normalized_overlap(phi: &WaveState, psi: &WaveState) -> Result<Complex64, GridError> {
    let o = inner_product(phi, psi)?;
    Ok(o / (phi.stored_norm() * psi.stored_norm()).sqrt())
}
