//! Growth-law fitting and diagnostics.
//!
//! Two models are fitted by ordinary least squares on transformed data:
//!
//! * exponential: `y = A exp(rate * t)`, regressing `ln y` on `t`;
//! * superexponential: `y = s exp[g exp(rate * t + b)]`, regressing
//!   `ln(ln(y / s) / g)` on `t`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::observables::ObservableRecord;

/// Fewest points a fit accepts.
pub const MIN_FIT_POINTS: usize = 5;

/// Kicks skipped at the start of every auto-selected window.
pub const DEFAULT_SKIP_INITIAL: usize = 3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitError {
    #[error("non-positive or non-finite value {value} at t = {t}")]
    NonPositiveData { t: usize, value: f64 },
    #[error("fit window holds {0} points, at least {MIN_FIT_POINTS} are required")]
    WindowTooSmall(usize),
    #[error("double-log transform undefined at t = {t} (y/s = {ratio})")]
    DomainError { t: usize, ratio: f64 },
    #[error("no kick range satisfies the window bounds")]
    NoValidWindow,
    #[error("threshold crossing not bracketed by the supplied values: {0}")]
    Unresolved(String),
    #[error("invalid fit request: {0}")]
    InvalidRequest(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitModel {
    Exponential,
    Superexponential,
}

/// Inclusive range of kick indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FitWindow {
    pub start: usize,
    pub end: usize,
}

impl FitWindow {
    pub fn new(start: usize, end: usize) -> Self {
        Self { start, end }
    }

    pub fn contains(&self, t: usize) -> bool {
        (self.start..=self.end).contains(&t)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model: FitModel,
    /// Growth rate per kick.
    pub rate: f64,
    /// `A` of the exponential model, or the inner amplitude `g e^b` of the
    /// superexponential one.
    pub prefactor: f64,
    pub r_squared: f64,
    pub window: FitWindow,
    pub n_points: usize,
}

/// A single sample of a time series; `flagged` marks guard-terminated rows.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesPoint {
    pub t: usize,
    pub y: f64,
    pub flagged: bool,
}

impl SeriesPoint {
    pub fn new(t: usize, y: f64) -> Self {
        Self {
            t,
            y,
            flagged: false,
        }
    }
}

/// Builds a series from records; rows where `column` is `None` are skipped.
pub fn series_from_records<F>(records: &[ObservableRecord], column: F) -> Vec<SeriesPoint>
where
    F: Fn(&ObservableRecord) -> Option<f64>,
{
    records
        .iter()
        .filter_map(|r| {
            column(r).map(|y| SeriesPoint {
                t: r.kick_index,
                y,
                flagged: r.terminated.is_some(),
            })
        })
        .collect()
}

/// Straight-line least squares.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

pub fn linear_regression(xs: &[f64], ys: &[f64]) -> LineFit {
    assert_eq!(xs.len(), ys.len());
    assert!(xs.len() >= 2, "regression needs two points");
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| {
            let e = y - (intercept + slope * x);
            e * e
        })
        .sum();
    // A perfectly flat series is fitted exactly by the flat line.
    let r_squared = if syy > 0.0 {
        (1.0 - sse / syy).clamp(0.0, 1.0)
    } else {
        1.0
    };
    LineFit {
        slope,
        intercept,
        r_squared,
    }
}

fn window_points(series: &[SeriesPoint], window: FitWindow) -> Result<Vec<SeriesPoint>, FitError> {
    if window.start >= window.end {
        return Err(FitError::InvalidRequest(format!(
            "window start {} must precede end {}",
            window.start, window.end
        )));
    }
    let points: Vec<SeriesPoint> = series
        .iter()
        .copied()
        .filter(|p| window.contains(p.t))
        .collect();
    if points.len() < MIN_FIT_POINTS {
        return Err(FitError::WindowTooSmall(points.len()));
    }
    Ok(points)
}

/// Exponential fit of `y ~ A e^{rate t}` over `window`.
pub fn fit_exponential(series: &[SeriesPoint], window: FitWindow) -> Result<FitResult, FitError> {
    let points = window_points(series, window)?;
    let mut ts = Vec::with_capacity(points.len());
    let mut logs = Vec::with_capacity(points.len());
    for p in &points {
        if !(p.y.is_finite() && p.y > 0.0) {
            return Err(FitError::NonPositiveData { t: p.t, value: p.y });
        }
        ts.push(p.t as f64);
        logs.push(p.y.ln());
    }
    let line = linear_regression(&ts, &logs);
    Ok(FitResult {
        model: FitModel::Exponential,
        rate: line.slope,
        prefactor: line.intercept.exp(),
        r_squared: line.r_squared,
        window,
        n_points: points.len(),
    })
}

/// Superexponential fit of `y ~ s exp[g exp(rate t + b)]` over `window`.
pub fn fit_superexponential(
    series: &[SeriesPoint],
    scale: f64,
    g: f64,
    window: FitWindow,
) -> Result<FitResult, FitError> {
    if !(scale.is_finite() && scale > 0.0) {
        return Err(FitError::InvalidRequest(format!(
            "scale must be > 0, got {scale}"
        )));
    }
    if !(g.is_finite() && g > 0.0) {
        return Err(FitError::InvalidRequest(format!(
            "inner amplitude g must be > 0, got {g}"
        )));
    }
    let points = window_points(series, window)?;
    let mut ts = Vec::with_capacity(points.len());
    let mut transformed = Vec::with_capacity(points.len());
    for p in &points {
        let ratio = p.y / scale;
        if !(ratio.is_finite() && ratio > 1.0) {
            return Err(FitError::DomainError { t: p.t, ratio });
        }
        ts.push(p.t as f64);
        transformed.push((ratio.ln() / g).ln());
    }
    let line = linear_regression(&ts, &transformed);
    Ok(FitResult {
        model: FitModel::Superexponential,
        rate: line.slope,
        prefactor: g * line.intercept.exp(),
        r_squared: line.r_squared,
        window,
        n_points: points.len(),
    })
}

/// Bounds for [`select_fit_window`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowBounds {
    pub y_min: f64,
    pub y_max: f64,
    /// Kicks with `t < skip_initial` are never part of the window.
    pub skip_initial: usize,
}

impl WindowBounds {
    /// Defaults for distance-like series with scale `s = (eps/hbar)^2`.
    pub fn for_distance(scale: f64) -> Self {
        Self {
            y_min: 1e-8 * scale,
            y_max: 0.5,
            skip_initial: DEFAULT_SKIP_INITIAL,
        }
    }

    /// Distance-like bounds raised to the superexponential baseline
    /// `s e^g`, the model's value at `t = 0`.
    pub fn for_superexponential(scale: f64, g: f64) -> Self {
        Self {
            y_min: scale * g.exp(),
            ..Self::for_distance(scale)
        }
    }
}

/// Largest contiguous run of kicks with `y` in `[y_min, y_max]`, no guard
/// flag and `t >= skip_initial`. Ties go to the earliest run. A flagged row
/// ends the usable part of the series.
pub fn select_fit_window(
    series: &[SeriesPoint],
    bounds: &WindowBounds,
) -> Result<FitWindow, FitError> {
    let mut best: Option<(usize, usize)> = None;
    let mut current: Option<(usize, usize)> = None;
    let mut previous_t: Option<usize> = None;

    for p in series {
        if p.flagged {
            break;
        }
        let usable = p.t >= bounds.skip_initial
            && p.y.is_finite()
            && p.y >= bounds.y_min
            && p.y <= bounds.y_max;
        let contiguous = previous_t.is_some_and(|prev| p.t == prev + 1);
        previous_t = Some(p.t);
        current = match (usable, current) {
            (true, Some((start, _))) if contiguous => Some((start, p.t)),
            (true, _) => Some((p.t, p.t)),
            (false, _) => None,
        };
        if let Some((s, e)) = current {
            if best.is_none_or(|(bs, be)| e - s > be - bs) {
                best = Some((s, e));
            }
        }
    }

    match best {
        Some((start, end)) if end > start => Ok(FitWindow { start, end }),
        _ => Err(FitError::NoValidWindow),
    }
}

/// Through-origin fit `y = k x`, returning `k` and the largest relative
/// residual `|y - k x| / |y|`.
pub fn proportionality_fit(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    assert_eq!(xs.len(), ys.len());
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| x * y).sum();
    let sxx: f64 = xs.iter().map(|x| x * x).sum();
    let k = sxy / sxx;
    let worst = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| ((y - k * x) / y).abs())
        .fold(0.0, f64::max);
    (k, worst)
}

/// Slope of `log_norm` against `t` over the later half of the records.
pub fn norm_growth_slope(records: &[ObservableRecord]) -> Result<f64, FitError> {
    let usable: Vec<&ObservableRecord> = records
        .iter()
        .filter(|r| r.terminated.is_none() && r.log_norm.is_finite())
        .collect();
    let late = &usable[usable.len() / 2..];
    if late.len() < 2 {
        return Err(FitError::WindowTooSmall(late.len()));
    }
    let ts: Vec<f64> = late.iter().map(|r| r.kick_index as f64).collect();
    let ys: Vec<f64> = late.iter().map(|r| r.log_norm).collect();
    Ok(linear_regression(&ts, &ys).slope)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EtaCOptions {
    /// Norm-growth slope (per kick) that counts as exponential growth.
    pub slope_threshold: f64,
    /// Width of the final bracket around the threshold crossing.
    pub resolution: f64,
}

impl Default for EtaCOptions {
    fn default() -> Self {
        Self {
            slope_threshold: 1e-3,
            resolution: f64::INFINITY,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EtaCEstimate {
    /// Smallest probed eta whose norm slope exceeds the threshold.
    pub eta_c: f64,
    /// Largest probed eta below threshold.
    pub lower_bracket: f64,
    /// `(eta, slope)` for every probe, in evaluation order.
    pub probes: Vec<(f64, f64)>,
}

/// Locates the onset of norm growth by thresholding the late-time norm slope
/// measured by `slope_at(eta)`, then bisects the bracket down to
/// `options.resolution`.
pub fn estimate_eta_c<F, E>(
    eta_values: &[f64],
    options: &EtaCOptions,
    mut slope_at: F,
) -> Result<EtaCEstimate, FitError>
where
    F: FnMut(f64) -> Result<f64, E>,
    E: std::fmt::Display,
{
    if eta_values.len() < 3 {
        return Err(FitError::InvalidRequest(
            "at least three eta values are required".into(),
        ));
    }
    if eta_values.windows(2).any(|w| w[1] <= w[0]) {
        return Err(FitError::InvalidRequest(
            "eta values must be strictly ascending".into(),
        ));
    }
    let mut probe = |eta: f64, probes: &mut Vec<(f64, f64)>| -> Result<bool, FitError> {
        let slope = slope_at(eta).map_err(|e| FitError::Unresolved(format!("eta = {eta}: {e}")))?;
        probes.push((eta, slope));
        Ok(slope > options.slope_threshold)
    };

    let mut probes = Vec::new();
    let mut first_above = None;
    for (i, &eta) in eta_values.iter().enumerate() {
        if probe(eta, &mut probes)? {
            first_above = Some(i);
            break;
        }
    }
    let index = match first_above {
        None => {
            return Err(FitError::Unresolved(
                "no eta exceeds the slope threshold".into(),
            ))
        }
        Some(0) => {
            return Err(FitError::Unresolved(
                "the smallest eta already exceeds the slope threshold".into(),
            ))
        }
        Some(i) => i,
    };

    let (mut lo, mut hi) = (eta_values[index - 1], eta_values[index]);
    while hi - lo > options.resolution {
        let mid = 0.5 * (lo + hi);
        if probe(mid, &mut probes)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(EtaCEstimate {
        eta_c: hi,
        lower_bracket: lo,
        probes,
    })
}

/// Effective kick strength `g (norm / norm_0) / (pi hbar)` used by the
/// energy iteration. The `1 / (pi hbar)` normalization reproduces the
/// Hermitian growth factor `1 + (g / pi hbar)^2`; the norm factor carries the
/// non-Hermitian amplification.
pub fn effective_kick_strength(g: f64, hbar_eff: f64, log_norm: f64) -> f64 {
    g * log_norm.exp() / (PI * hbar_eff)
}

/// Ratio of measured `<p^2>(t+1)` to the one-step prediction
/// `<p^2>(t) (1 + g_eff(t)^2)`, for consecutive unflagged records.
pub fn energy_step_diagnostic(records: &[ObservableRecord], g: f64, hbar_eff: f64) -> Vec<f64> {
    records
        .windows(2)
        .take_while(|w| w[1].terminated.is_none())
        .map(|w| {
            let strength = effective_kick_strength(g, hbar_eff, w[0].log_norm);
            let predicted = w[0].mean_p2 * (1.0 + strength * strength);
            w[1].mean_p2 / predicted
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series<F: Fn(f64) -> f64>(ts: std::ops::RangeInclusive<usize>, f: F) -> Vec<SeriesPoint> {
        ts.map(|t| SeriesPoint::new(t, f(t as f64))).collect()
    }

    #[test]
    fn exponential_exact_model() {
        let s = series(0..=20, |t| 3.0 * (0.3 * t).exp());
        let fit = fit_exponential(&s, FitWindow::new(0, 20)).unwrap();
        assert!((fit.rate - 0.3).abs() < 1e-10);
        assert!((fit.r_squared - 1.0).abs() < 1e-10);
        assert!((fit.prefactor - 3.0).abs() < 1e-9);
        assert_eq!(fit.n_points, 21);
    }

    #[test]
    fn exponential_constant_series() {
        let s = series(0..=10, |_| 0.25);
        let fit = fit_exponential(&s, FitWindow::new(0, 10)).unwrap();
        assert!(fit.rate.abs() < 1e-12);
        assert_eq!(fit.r_squared, 1.0);
    }

    #[test]
    fn exponential_rejects_non_positive() {
        let mut s = series(0..=10, |t| 1.0 + t);
        s[4].y = 0.0;
        assert_eq!(
            fit_exponential(&s, FitWindow::new(0, 10)).unwrap_err(),
            FitError::NonPositiveData { t: 4, value: 0.0 }
        );
    }

    #[test]
    fn fits_reject_small_windows() {
        let s = series(0..=10, |t| 1.0 + t);
        assert_eq!(
            fit_exponential(&s, FitWindow::new(2, 5)).unwrap_err(),
            FitError::WindowTooSmall(4)
        );
        assert!(matches!(
            fit_exponential(&s, FitWindow::new(5, 5)),
            Err(FitError::InvalidRequest(_))
        ));
    }

    #[test]
    fn superexponential_exact_model() {
        let scale = 1e-10;
        let s = series(0..=60, |t| scale * (0.05 * t).exp().exp());
        let fit = fit_superexponential(&s, scale, 1.0, FitWindow::new(0, 60)).unwrap();
        assert!((fit.rate - 0.05).abs() < 1e-8);
        assert!((fit.r_squared - 1.0).abs() < 1e-10);
        assert!((fit.prefactor - 1.0).abs() < 1e-8);
    }

    #[test]
    fn superexponential_domain_error() {
        let s = series(0..=10, |_| 0.5e-10);
        assert!(matches!(
            fit_superexponential(&s, 1e-10, 1.0, FitWindow::new(0, 10)),
            Err(FitError::DomainError { t: 0, .. })
        ));
    }

    #[test]
    fn model_selection_prefers_exponential_on_exponential_data() {
        let scale = 1e-10;
        let s = series(0..=80, |t| 5.0 * scale * (0.1 * t).exp());
        let w = FitWindow::new(0, 80);
        let exp = fit_exponential(&s, w).unwrap();
        let sup = fit_superexponential(&s, scale, 1.0, w).unwrap();
        assert!((exp.r_squared - 1.0).abs() < 1e-12);
        assert!(sup.r_squared < exp.r_squared - 0.01, "{}", sup.r_squared);
    }

    #[test]
    fn window_between_crossings() {
        let s = series(0..=30, |t| 1e-6 * (0.5 * t).exp());
        let w = select_fit_window(
            &s,
            &WindowBounds {
                y_min: 1e-4,
                y_max: 0.5,
                skip_initial: 0,
            },
        )
        .unwrap();
        // 1e-6 e^{0.5 t} crosses 1e-4 between t = 9 and 10, 0.5 between 26 and 27.
        assert_eq!(w, FitWindow::new(10, 26));
    }

    #[test]
    fn window_stops_before_saturation() {
        let s = series(0..=40, |t| 1.0 - (-0.1 * t).exp());
        let w = select_fit_window(&s, &WindowBounds::for_distance(1e-10)).unwrap();
        assert_eq!(w.start, DEFAULT_SKIP_INITIAL);
        assert!(s[w.end].y <= 0.5 && s[w.end + 1].y > 0.5);
    }

    #[test]
    fn window_excludes_flagged_rows() {
        let mut s = series(0..=50, |t| 1e-9 * (0.1 * t).exp());
        s[40].flagged = true;
        let w = select_fit_window(&s, &WindowBounds::for_distance(1e-10)).unwrap();
        assert!(w.end <= 39);
    }

    #[test]
    fn no_valid_window() {
        let s = series(0..=10, |_| 0.9);
        assert_eq!(
            select_fit_window(&s, &WindowBounds::for_distance(1e-10)).unwrap_err(),
            FitError::NoValidWindow
        );
    }

    #[test]
    fn proportionality() {
        let (k, worst) = proportionality_fit(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]);
        assert!((k - 2.0).abs() < 1e-15);
        assert!(worst < 1e-15);
    }

    #[test]
    fn eta_c_thresholding_and_bisection() {
        // Synthetic slope: zero below 0.013, linear above.
        let slope = |eta: f64| -> Result<f64, String> { Ok((eta - 0.013).max(0.0)) };
        let coarse =
            estimate_eta_c(&[0.0, 0.01, 0.02, 0.03], &EtaCOptions::default(), slope).unwrap();
        assert_eq!(coarse.eta_c, 0.02);
        assert_eq!(coarse.lower_bracket, 0.01);

        let options = EtaCOptions {
            slope_threshold: 1e-4,
            resolution: 1e-4,
        };
        let fine = estimate_eta_c(&[0.0, 0.01, 0.02, 0.03], &options, slope).unwrap();
        assert!(fine.eta_c - fine.lower_bracket <= 1e-4);
        assert!((fine.eta_c - 0.0131).abs() < 2e-4);
    }

    #[test]
    fn eta_c_unresolved() {
        let options = EtaCOptions::default();
        let flat = |_: f64| -> Result<f64, String> { Ok(0.0) };
        assert!(matches!(
            estimate_eta_c(&[0.0, 0.1, 0.2], &options, flat),
            Err(FitError::Unresolved(_))
        ));
        let steep = |_: f64| -> Result<f64, String> { Ok(1.0) };
        assert!(matches!(
            estimate_eta_c(&[0.0, 0.1, 0.2], &options, steep),
            Err(FitError::Unresolved(_))
        ));
        assert!(matches!(
            estimate_eta_c(&[0.0, 0.1], &options, flat),
            Err(FitError::InvalidRequest(_))
        ));
    }

    #[test]
    fn energy_diagnostic_for_free_rotor() {
        let records: Vec<ObservableRecord> = (0..5)
            .map(|t| ObservableRecord {
                kick_index: t,
                log_norm: 0.0,
                mean_p: 0.0,
                mean_p2: 5.0,
                distance: None,
                one_minus_fotoc: 0.0,
                one_minus_le: None,
                edge_mass: 0.0,
                terminated: None,
            })
            .collect();
        let r = energy_step_diagnostic(&records, 0.0, 1.0);
        assert_eq!(r.len(), 4);
        assert!(r.iter().all(|x| (x - 1.0).abs() < 1e-9));
    }
}
