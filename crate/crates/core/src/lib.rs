//! Deterministic simulator for the kicked non-Hermitian Gross-Pitaevskii map.
//!
//! The state lives on a uniform grid over the angle circle and is advanced by
//! an exactly factorized Floquet map: a complex, density-dependent kick
//! followed by free rotation. On top of the evolution sit the observables
//! (momentum moments, state distance, FOTOC, Loschmidt echo) and the fitting
//! tools for exponential and superexponential growth.

pub mod analysis;
pub mod evolution;
pub mod grid;
pub mod observables;

pub use rustfft::num_complex::Complex64;

pub use analysis::{FitError, FitModel, FitResult, FitWindow, SeriesPoint, WindowBounds};
pub use evolution::{EvolutionError, EvolutionGuards, GuardKind, Termination, Trajectory};
pub use grid::{GridError, ModelParams, SpatialGrid, WaveState};
pub use observables::ObservableRecord;
