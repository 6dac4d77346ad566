//! Checks against independently computed reference values.

use std::f64::consts::PI;

use ngpm_core::evolution::{apply_kick, floquet_step, EvolutionGuards};
use ngpm_core::grid::{make_gaussian, make_grid, translate, ModelParams, WaveState};
use ngpm_core::observables::{distance, fidelity, fotoc_deficit, mean_energy};
use ngpm_core::Complex64;

/// Composite Simpson rule on `[a, b]` with `n` (even) intervals.
fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut sum = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        sum += w * f(a + i as f64 * h);
    }
    sum * h / 3.0
}

#[test]
fn gaussian_second_moment_matches_quadrature() {
    let sigma = 10.0;
    // <p^2> = hbar^2 * int |psi'|^2 over the line, psi' = -sigma theta psi.
    let psi = |x: f64| (sigma / PI).powf(0.25) * (-0.5 * sigma * x * x).exp();
    let quad = simpson(
        |x| {
            let d = -sigma * x * psi(x);
            d * d
        },
        -12.0,
        12.0,
        20_000,
    );
    assert!((quad - 5.0).abs() < 1e-9, "quadrature gives {quad}");

    let grid = make_grid(4096).unwrap();
    let state = make_gaussian(&grid, sigma, 0.0).unwrap();
    let p2 = mean_energy(&state, 1.0);
    assert!((p2 - 5.0).abs() / 5.0 < 1e-3, "{p2}");
}

#[test]
fn small_translation_fidelity_deficit() {
    // Unbounded Gaussian: |<psi|psi(. - eps)>|^2 = exp(-sigma eps^2 / 2).
    let (sigma, eps): (f64, f64) = (10.0, 1e-5);
    let exact = -(-0.5 * sigma * eps * eps).exp_m1();
    assert!((exact - 5e-10).abs() < 1e-18);

    let grid = make_grid(4096).unwrap();
    let state = make_gaussian(&grid, sigma, 0.0).unwrap();
    let shifted = translate(&state, eps);

    let d = distance(&state, &shifted).unwrap();
    assert!((d - exact).abs() / exact < 0.01, "distance {d}");

    let deficit = fotoc_deficit(&state, eps);
    assert!(
        (deficit - exact).abs() / exact < 0.01,
        "fotoc deficit {deficit}"
    );

    // Same quantity through the plain fidelity (cancellation-limited).
    let f = fidelity(&state, &shifted).unwrap();
    assert!(((1.0 - f) - exact).abs() / exact < 0.01, "fidelity {f}");
}

/// Dense N x N construction of one Floquet period acting on physical amplitudes.
fn dense_floquet(psi: &[Complex64], params: &ModelParams) -> Vec<Complex64> {
    let n = psi.len();
    let i = Complex64::new(0.0, 1.0);
    let coupling = Complex64::new(params.g, params.eta);

    let kick: Vec<Complex64> = psi
        .iter()
        .map(|z| (-i * coupling * z.norm_sqr() / params.hbar_eff).exp())
        .collect();

    let mut dft = vec![vec![Complex64::new(0.0, 0.0); n]; n];
    let mut idft = vec![vec![Complex64::new(0.0, 0.0); n]; n];
    for k in 0..n {
        for j in 0..n {
            let angle = 2.0 * PI * (k * j) as f64 / n as f64;
            dft[k][j] = Complex64::from_polar(1.0, -angle);
            idft[j][k] = Complex64::from_polar(1.0 / n as f64, angle);
        }
    }
    let free: Vec<Complex64> = (0..n)
        .map(|k| {
            let mode = if k < n / 2 {
                k as f64
            } else {
                k as f64 - n as f64
            };
            Complex64::from_polar(1.0, -0.5 * params.hbar_eff * mode * mode)
        })
        .collect();

    let mut op = vec![vec![Complex64::new(0.0, 0.0); n]; n];
    for r in 0..n {
        for c in 0..n {
            let mut acc = Complex64::new(0.0, 0.0);
            for k in 0..n {
                acc += idft[r][k] * free[k] * dft[k][c];
            }
            op[r][c] = acc * kick[c];
        }
    }
    (0..n)
        .map(|r| (0..n).map(|c| op[r][c] * psi[c]).sum())
        .collect()
}

#[test]
fn floquet_step_matches_dense_matrices() {
    let grid = make_grid(8).unwrap();
    let raw: Vec<Complex64> = (0..8)
        .map(|j| Complex64::new(0.3 + 0.1 * j as f64, 0.05 * (j as f64 - 3.0)))
        .collect();
    let state = WaveState::from_amplitudes(grid.clone(), raw).unwrap();
    let physical: Vec<Complex64> = state
        .amplitudes()
        .iter()
        .map(|z| z * state.log_amplitude().exp())
        .collect();

    for params in [
        ModelParams::new(1.0, 0.0, 1.0).unwrap(),
        ModelParams::new(1.0, 0.05, 1.0).unwrap(),
        ModelParams::new(0.7, 0.2, 0.5).unwrap(),
    ] {
        let expected = dense_floquet(&physical, &params);
        // An 8-point state has mass at every mode; the edge guard is disabled.
        let guards = EvolutionGuards {
            edge_fraction_max: 1.0,
            ..Default::default()
        };
        let next = floquet_step(&state, &params, &guards).unwrap();
        let scale = next.log_amplitude().exp();
        for (got, want) in next.amplitudes().iter().zip(&expected) {
            assert!(
                (got * scale - want).norm() < 1e-12,
                "{params:?}: {got} vs {want}"
            );
        }
    }
}

#[test]
fn kick_pointwise_oracle_at_high_norm() {
    // Large log amplitude: the factored kick must still equal the raw product.
    let grid = make_grid(64).unwrap();
    let state = make_gaussian(&grid, 10.0, 0.0)
        .unwrap()
        .with_log_amplitude(0.8);
    let params = ModelParams::new(1.0, 0.3, 0.7).unwrap();
    let kicked = apply_kick(&state, &params, &EvolutionGuards::default()).unwrap();
    let scale = kicked.log_amplitude().exp();
    for (before, after) in state.amplitudes().iter().zip(kicked.amplitudes()) {
        let amp = before * state.log_amplitude().exp();
        let rho = amp.norm_sqr();
        let exponent = Complex64::new(0.0, -1.0) * Complex64::new(params.g, params.eta) * rho
            / params.hbar_eff;
        let want = amp * exponent.exp();
        assert!((after * scale - want).norm() < 1e-12 * want.norm().max(1.0));
    }
}
