//! Discretized angle circle, wavefunction storage and spectral transforms.
//!
//! Angles live on `[-pi, pi)` with `N` equally spaced samples. Momentum is
//! quantized as `p_n = hbar_eff * n` with integer `n` in `[-N/2, N/2)`, and the
//! momentum coefficients `c_n` are taken on the basis `e^{i n theta} / sqrt(2 pi)`.
//!
//! A [`WaveState`] stores unit-normalized amplitudes plus a separate log
//! amplitude, so that the physical wavefunction is `e^L * psi_hat`.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use thiserror::Error;

/// Smallest accepted grid.
pub const MIN_GRID_POINTS: usize = 8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("grid size {0} is not a power of two")]
    NotPowerOfTwo(usize),
    #[error("grid size {0} is below the minimum of {MIN_GRID_POINTS}")]
    TooSmall(usize),
    #[error("states live on different grids ({0} vs {1} points)")]
    Mismatch(usize, usize),
    #[error("expected {expected} amplitudes, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("state has zero or non-finite norm")]
    Degenerate,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// Uniform grid on the angle circle together with cached FFT plans.
pub struct SpatialGrid {
    n_points: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for SpatialGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SpatialGrid")
            .field("n_points", &self.n_points)
            .finish()
    }
}

impl PartialEq for SpatialGrid {
    fn eq(&self, other: &Self) -> bool {
        self.n_points == other.n_points
    }
}

impl SpatialGrid {
    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn dtheta(&self) -> f64 {
        2.0 * PI / self.n_points as f64
    }

    /// `theta_j = -pi + j * dtheta`.
    pub fn theta(&self, j: usize) -> f64 {
        -PI + j as f64 * self.dtheta()
    }

    pub fn theta_values(&self) -> Vec<f64> {
        (0..self.n_points).map(|j| self.theta(j)).collect()
    }

    /// Momentum indices in ascending order, `-N/2 ..= N/2 - 1`.
    pub fn momentum_indices(&self) -> impl Iterator<Item = i64> {
        let half = (self.n_points / 2) as i64;
        -half..half
    }

    /// Momentum index carried by slot `k` of a raw FFT output.
    #[inline]
    pub fn fft_index_to_mode(&self, k: usize) -> i64 {
        if k < self.n_points / 2 {
            k as i64
        } else {
            k as i64 - self.n_points as i64
        }
    }

    #[inline]
    pub fn mode_to_fft_index(&self, n: i64) -> usize {
        n.rem_euclid(self.n_points as i64) as usize
    }

    /// In-place unnormalized forward FFT.
    pub(crate) fn fft_forward(&self, buf: &mut [Complex64]) {
        self.forward.process(buf);
    }

    /// In-place inverse FFT including the `1/N` factor.
    pub(crate) fn fft_inverse(&self, buf: &mut [Complex64]) {
        self.inverse.process(buf);
        let scale = 1.0 / self.n_points as f64;
        for z in buf.iter_mut() {
            *z *= scale;
        }
    }

    /// Applies a diagonal operator in momentum space: `c_n -> phase(n) * c_n`.
    pub(crate) fn apply_momentum_diagonal<F>(&self, buf: &mut [Complex64], phase: F)
    where
        F: Fn(i64) -> Complex64,
    {
        self.fft_forward(buf);
        for (k, z) in buf.iter_mut().enumerate() {
            *z *= phase(self.fft_index_to_mode(k));
        }
        self.fft_inverse(buf);
    }
}

/// Builds a grid with `n_points` samples on `[-pi, pi)`.
pub fn make_grid(n_points: usize) -> Result<Arc<SpatialGrid>, GridError> {
    if !n_points.is_power_of_two() {
        return Err(GridError::NotPowerOfTwo(n_points));
    }
    if n_points < MIN_GRID_POINTS {
        return Err(GridError::TooSmall(n_points));
    }
    let mut planner = FftPlanner::new();
    Ok(Arc::new(SpatialGrid {
        n_points,
        forward: planner.plan_fft_forward(n_points),
        inverse: planner.plan_fft_inverse(n_points),
    }))
}

/// Model constants `(g, eta, hbar_eff)` of the kicked map.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ModelParams {
    pub g: f64,
    pub eta: f64,
    pub hbar_eff: f64,
}

impl ModelParams {
    pub fn new(g: f64, eta: f64, hbar_eff: f64) -> Result<Self, GridError> {
        let params = Self { g, eta, hbar_eff };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<(), GridError> {
        if !(self.g.is_finite() && self.eta.is_finite() && self.hbar_eff.is_finite()) {
            return Err(GridError::InvalidParameter(
                "g, eta and hbar_eff must be finite".into(),
            ));
        }
        if self.hbar_eff <= 0.0 {
            return Err(GridError::InvalidParameter("hbar_eff must be > 0".into()));
        }
        if self.eta < 0.0 {
            return Err(GridError::InvalidParameter("eta must be >= 0".into()));
        }
        Ok(())
    }
}

/// Wavefunction on a [`SpatialGrid`]: `psi_j = exp(log_amplitude) * amplitudes[j]`,
/// with `sum_j |amplitudes[j]|^2 * dtheta == 1`.
#[derive(Debug, Clone)]
pub struct WaveState {
    grid: Arc<SpatialGrid>,
    amplitudes: Vec<Complex64>,
    log_amplitude: f64,
}

impl WaveState {
    /// Wraps raw physical samples. The samples are renormalized and their norm
    /// is folded into the log amplitude.
    pub fn from_amplitudes(
        grid: Arc<SpatialGrid>,
        amplitudes: Vec<Complex64>,
    ) -> Result<Self, GridError> {
        Self::from_parts(grid, amplitudes, 0.0)
    }

    pub(crate) fn from_parts(
        grid: Arc<SpatialGrid>,
        mut amplitudes: Vec<Complex64>,
        log_amplitude: f64,
    ) -> Result<Self, GridError> {
        if amplitudes.len() != grid.n_points() {
            return Err(GridError::LengthMismatch {
                expected: grid.n_points(),
                actual: amplitudes.len(),
            });
        }
        let norm2 = squared_norm(&amplitudes, grid.dtheta());
        if !(norm2.is_finite() && norm2 > 0.0) {
            return Err(GridError::Degenerate);
        }
        let scale = norm2.sqrt().recip();
        for z in amplitudes.iter_mut() {
            *z *= scale;
        }
        Ok(Self {
            grid,
            amplitudes,
            log_amplitude: log_amplitude + 0.5 * norm2.ln(),
        })
    }

    pub fn grid(&self) -> &Arc<SpatialGrid> {
        &self.grid
    }

    /// Unit-normalized stored amplitudes.
    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn log_amplitude(&self) -> f64 {
        self.log_amplitude
    }

    /// Same state with a different log amplitude.
    pub fn with_log_amplitude(mut self, log_amplitude: f64) -> Self {
        self.log_amplitude = log_amplitude;
        self
    }

    /// Physical squared norm `e^{2L}`.
    pub fn physical_norm_squared(&self) -> f64 {
        (2.0 * self.log_amplitude).exp()
    }

    /// Physical density `e^{2L} |psi_hat_j|^2` at every grid point.
    pub fn physical_density(&self) -> Vec<f64> {
        let weight = (2.0 * self.log_amplitude).exp();
        self.amplitudes
            .iter()
            .map(|z| weight * z.norm_sqr())
            .collect()
    }

    /// `sum |psi_hat_j|^2 dtheta` of the stored amplitudes (1 up to rounding).
    pub fn stored_norm(&self) -> f64 {
        squared_norm(&self.amplitudes, self.grid.dtheta())
    }

    pub(crate) fn same_grid(&self, other: &WaveState) -> Result<(), GridError> {
        if *self.grid == *other.grid {
            Ok(())
        } else {
            Err(GridError::Mismatch(
                self.grid.n_points(),
                other.grid.n_points(),
            ))
        }
    }
}

fn squared_norm(amplitudes: &[Complex64], dtheta: f64) -> f64 {
    amplitudes.iter().map(|z| z.norm_sqr()).sum::<f64>() * dtheta
}

/// Normalized Gaussian `(sigma/pi)^{1/4} exp(-sigma (theta - center)^2 / 2)`,
/// using the wrapped angular distance to `center`.
pub fn make_gaussian(
    grid: &Arc<SpatialGrid>,
    sigma: f64,
    center: f64,
) -> Result<WaveState, GridError> {
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(GridError::InvalidParameter("sigma must be > 0".into()));
    }
    if !center.is_finite() {
        return Err(GridError::InvalidParameter("center must be finite".into()));
    }
    if sigma.sqrt().recip() > PI / 3.0 {
        tracing::warn!(
            sigma,
            "gaussian width is not small against the circle; periodic images are not negligible"
        );
    }
    let prefactor = (sigma / PI).powf(0.25);
    let amplitudes = (0..grid.n_points())
        .map(|j| {
            let d = wrap_angle(grid.theta(j) - center);
            Complex64::new(prefactor * (-0.5 * sigma * d * d).exp(), 0.0)
        })
        .collect();
    let state = WaveState::from_amplitudes(grid.clone(), amplitudes)?;
    // The discrete norm differs from 1 only by quadrature error; start at L = 0.
    Ok(state.with_log_amplitude(0.0))
}

/// Normalized plane wave `e^{i n theta} / sqrt(2 pi)`.
pub fn make_plane_wave(grid: &Arc<SpatialGrid>, mode: i64) -> Result<WaveState, GridError> {
    let amplitudes = (0..grid.n_points())
        .map(|j| Complex64::from_polar(1.0, mode as f64 * grid.theta(j)))
        .collect();
    Ok(WaveState::from_amplitudes(grid.clone(), amplitudes)?.with_log_amplitude(0.0))
}

/// Maps an angle into `[-pi, pi)`.
pub fn wrap_angle(theta: f64) -> f64 {
    let wrapped = (theta + PI).rem_euclid(2.0 * PI) - PI;
    if wrapped >= PI {
        wrapped - 2.0 * PI
    } else {
        wrapped
    }
}

/// Momentum-space coefficients `c_n` of a state, stored in ascending `n`.
#[derive(Debug, Clone)]
pub struct MomentumCoefficients {
    grid: Arc<SpatialGrid>,
    values: Vec<Complex64>,
}

impl MomentumCoefficients {
    pub fn grid(&self) -> &Arc<SpatialGrid> {
        &self.grid
    }

    /// Coefficients ordered by `n = -N/2, ..., N/2 - 1`.
    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn coefficient(&self, n: i64) -> Complex64 {
        let half = (self.grid.n_points() / 2) as i64;
        assert!((-half..half).contains(&n), "mode {n} outside the grid");
        self.values[(n + half) as usize]
    }

    /// `(n, |c_n|^2)` pairs in ascending `n`.
    pub fn probabilities(&self) -> impl Iterator<Item = (i64, f64)> + '_ {
        self.grid
            .momentum_indices()
            .zip(self.values.iter().map(|c| c.norm_sqr()))
    }
}

/// Momentum representation of the stored (normalized) amplitudes.
pub fn to_momentum(state: &WaveState) -> MomentumCoefficients {
    let grid = state.grid.clone();
    let n = grid.n_points();
    let mut buf = state.amplitudes.clone();
    grid.fft_forward(&mut buf);
    // c_n = dtheta/sqrt(2pi) * (-1)^n * FFT[n mod N], since theta_0 = -pi.
    let scale = grid.dtheta() / (2.0 * PI).sqrt();
    let values = grid
        .momentum_indices()
        .map(|mode| {
            let sign = if mode.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
            buf[grid.mode_to_fft_index(mode)] * (sign * scale)
        })
        .collect::<Vec<_>>();
    debug_assert_eq!(values.len(), n);
    MomentumCoefficients { grid, values }
}

/// Inverse of [`to_momentum`]; the log amplitude is supplied by the caller.
pub fn to_position(
    coefficients: &MomentumCoefficients,
    log_amplitude: f64,
) -> Result<WaveState, GridError> {
    let grid = coefficients.grid.clone();
    let mut buf = vec![Complex64::new(0.0, 0.0); grid.n_points()];
    let scale = (2.0 * PI).sqrt() / grid.dtheta();
    for (mode, c) in grid.momentum_indices().zip(coefficients.values.iter()) {
        let sign = if mode.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
        buf[grid.mode_to_fft_index(mode)] = *c * (sign * scale);
    }
    grid.fft_inverse(&mut buf);
    let state = WaveState::from_parts(grid, buf, 0.0)?;
    Ok(state.with_log_amplitude(log_amplitude))
}

/// Spectral translation `T(eps) = exp(-i eps p / hbar)`, i.e. `psi(theta) -> psi(theta - eps)`.
pub fn translate(state: &WaveState, epsilon: f64) -> WaveState {
    let mut buf = state.amplitudes.clone();
    state.grid.apply_momentum_diagonal(&mut buf, |n| {
        Complex64::from_polar(1.0, -epsilon * n as f64)
    });
    WaveState {
        grid: state.grid.clone(),
        amplitudes: buf,
        log_amplitude: state.log_amplitude,
    }
}

/// `sum_j conj(a_j) b_j dtheta` on the normalized amplitudes.
pub fn inner_product(a: &WaveState, b: &WaveState) -> Result<Complex64, GridError> {
    a.same_grid(b)?;
    let sum: Complex64 = a
        .amplitudes
        .iter()
        .zip(b.amplitudes.iter())
        .map(|(x, y)| x.conj() * y)
        .sum();
    Ok(sum * a.grid.dtheta())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn max_diff(a: &[Complex64], b: &[Complex64]) -> f64 {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y).norm())
            .fold(0.0, f64::max)
    }

    #[test]
    fn grid_of_eight() {
        let grid = make_grid(8).unwrap();
        assert!((grid.dtheta() - PI / 4.0).abs() < 1e-15);
        assert_eq!(grid.theta(0), -PI);
        assert_eq!(
            grid.momentum_indices().collect::<Vec<_>>(),
            vec![-4, -3, -2, -1, 0, 1, 2, 3]
        );
    }

    #[test]
    fn large_grid_spacing() {
        let grid = make_grid(4096).unwrap();
        assert_eq!(grid.dtheta(), 2.0 * PI / 4096.0);
        assert!((grid.dtheta() * 4096.0 - 2.0 * PI).abs() < 1e-15);
        let thetas = grid.theta_values();
        assert!(thetas.windows(2).all(|w| w[1] > w[0]));
        assert!(*thetas.last().unwrap() < PI);
    }

    #[test]
    fn rejects_bad_sizes() {
        assert_eq!(make_grid(12).unwrap_err(), GridError::NotPowerOfTwo(12));
        assert_eq!(make_grid(4).unwrap_err(), GridError::TooSmall(4));
        assert!(make_grid(0).is_err());
    }

    #[test]
    fn model_params_validation() {
        assert!(ModelParams::new(1.0, 0.05, 1.0).is_ok());
        assert!(ModelParams::new(1.0, 0.05, 0.0).is_err());
        assert!(ModelParams::new(f64::NAN, 0.05, 1.0).is_err());
        assert!(ModelParams::new(1.0, -0.1, 1.0).is_err());
    }

    #[test]
    fn gaussian_is_normalized_and_centered() {
        let grid = make_grid(4096).unwrap();
        let s = make_gaussian(&grid, 10.0, 0.0).unwrap();
        assert!((s.stored_norm() - 1.0).abs() < 1e-12);
        assert_eq!(s.log_amplitude(), 0.0);
        let peak = s
            .amplitudes()
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.norm().total_cmp(&b.1.norm()))
            .unwrap()
            .0;
        assert_eq!(grid.theta(peak), 0.0);
    }

    #[test]
    fn gaussian_parity() {
        let grid = make_grid(1024).unwrap();
        let s = make_gaussian(&grid, 10.0, 0.0).unwrap();
        let n = grid.n_points();
        let a = s.amplitudes();
        for j in 1..n {
            assert!((a[j] - a[n - j]).norm() < 1e-14);
        }
    }

    #[test]
    fn plane_wave_momentum_is_a_single_mode() {
        let grid = make_grid(256).unwrap();
        let s = make_plane_wave(&grid, 3).unwrap();
        let c = to_momentum(&s);
        for (n, p) in c.probabilities() {
            if n == 3 {
                assert!((p - 1.0).abs() < 1e-12);
            } else {
                assert!(p < 1e-24, "mode {n} has {p}");
            }
        }
    }

    #[test]
    fn gaussian_parseval() {
        let grid = make_grid(4096).unwrap();
        let s = make_gaussian(&grid, 10.0, 0.0).unwrap();
        let total: f64 = to_momentum(&s).probabilities().map(|(_, p)| p).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn momentum_round_trip() {
        let grid = make_grid(512).unwrap();
        let s = make_gaussian(&grid, 10.0, 0.7).unwrap();
        let back = to_position(&to_momentum(&s), s.log_amplitude()).unwrap();
        assert!(max_diff(s.amplitudes(), back.amplitudes()) < 1e-13);
    }

    #[test]
    fn translate_by_grid_step_is_cyclic_shift() {
        let grid = make_grid(256).unwrap();
        let s = make_gaussian(&grid, 10.0, 0.3).unwrap();
        let t = translate(&s, grid.dtheta());
        let n = grid.n_points();
        for j in 0..n {
            let expected = s.amplitudes()[(j + n - 1) % n];
            assert!((t.amplitudes()[j] - expected).norm() < 1e-13);
        }
    }

    #[test]
    fn translate_inverse_and_norm() {
        let grid = make_grid(1024).unwrap();
        let s = make_gaussian(&grid, 10.0, 0.0)
            .unwrap()
            .with_log_amplitude(2.5);
        let t = translate(&s, 0.123_456);
        assert_eq!(t.log_amplitude(), 2.5);
        assert!((t.stored_norm() - 1.0).abs() < 1e-12);
        let back = translate(&t, -0.123_456);
        assert!(max_diff(s.amplitudes(), back.amplitudes()) < 1e-13);
    }

    #[test]
    fn inner_product_properties() {
        let grid = make_grid(256).unwrap();
        let a = make_gaussian(&grid, 10.0, 0.2).unwrap();
        let b = make_gaussian(&grid, 7.0, -0.4).unwrap();
        assert!((inner_product(&a, &a).unwrap() - 1.0).norm() < 1e-12);
        assert_eq!(
            inner_product(&a, &b).unwrap(),
            inner_product(&b, &a).unwrap().conj()
        );
        let p2 = make_plane_wave(&grid, 2).unwrap();
        let p5 = make_plane_wave(&grid, 5).unwrap();
        assert!(inner_product(&p2, &p5).unwrap().norm() < 1e-12);
    }

    #[test]
    fn inner_product_grid_mismatch() {
        let a = make_gaussian(&make_grid(64).unwrap(), 10.0, 0.0).unwrap();
        let b = make_gaussian(&make_grid(128).unwrap(), 10.0, 0.0).unwrap();
        assert_eq!(
            inner_product(&a, &b).unwrap_err(),
            GridError::Mismatch(64, 128)
        );
    }

    #[test]
    fn wrap_angle_range() {
        for x in [-10.0, -PI, -1.0, 0.0, 1.0, PI, 7.5] {
            let w = wrap_angle(x);
            assert!((-PI..PI).contains(&w), "{x} -> {w}");
            let turns = (x - w) / (2.0 * PI);
            assert!((turns - turns.round()).abs() < 1e-12);
        }
    }
}
