//! Named parameter sets for the standard figures.

use ngpm_core::FitModel;

use crate::config::{
    ExperimentConfig, FitRequest, Mode, SweepAxis, SweepParameter, DEFAULT_GRID_POINTS,
    DEFAULT_MAX_GRID_POINTS,
};

pub const PRESET_NAMES: [&str; 4] = ["fig1a", "fig1b", "fig1c", "fig2"];

const ETAS: [f64; 5] = [0.0, 0.01, 0.02, 0.03, 0.05];
const RATE_ETAS: [f64; 3] = [0.02, 0.03, 0.05];
const HBARS: [f64; 4] = [0.2, 0.3, 0.5, 1.0];

/// Kick count long enough for the Hermitian distance to saturate; the
/// non-Hermitian runs stop earlier at the truncation guard.
const PRESET_KICKS: usize = 120;

fn base(mode: Mode, name: String) -> ExperimentConfig {
    ExperimentConfig {
        name,
        mode,
        g: 1.0,
        eta: 0.0,
        hbar: 1.0,
        n_kicks: PRESET_KICKS,
        grid_points: DEFAULT_GRID_POINTS,
        max_grid_points: DEFAULT_MAX_GRID_POINTS,
        sigma: 10.0,
        center: 0.0,
        epsilon: 1e-5,
        g_perturbation: None,
        guards: Default::default(),
        sweep: None,
        output_dir: "results".into(),
        fit: FitRequest::default(),
    }
}

fn sweep(parameter: SweepParameter, values: &[f64]) -> Option<SweepAxis> {
    Some(SweepAxis {
        parameter,
        values: values.to_vec(),
    })
}

fn superexponential_only() -> FitRequest {
    FitRequest {
        models: vec![FitModel::Superexponential],
        ..FitRequest::default()
    }
}

/// Configs making up the preset, each run as its own sweep.
pub fn preset(name: &str) -> Option<Vec<ExperimentConfig>> {
    let configs = match name {
        "fig1a" => vec![ExperimentConfig {
            sweep: sweep(SweepParameter::Eta, &ETAS),
            ..base(Mode::Distance, "fig1a".into())
        }],
        "fig1b" => HBARS
            .iter()
            .map(|&hbar| ExperimentConfig {
                hbar,
                sweep: sweep(SweepParameter::Eta, &RATE_ETAS),
                fit: superexponential_only(),
                ..base(Mode::Distance, format!("fig1b_hbar_{hbar}"))
            })
            .collect(),
        "fig1c" => RATE_ETAS
            .iter()
            .map(|&eta| ExperimentConfig {
                eta,
                sweep: sweep(SweepParameter::Hbar, &HBARS),
                fit: superexponential_only(),
                ..base(Mode::Distance, format!("fig1c_eta_{eta}"))
            })
            .collect(),
        "fig2" => vec![ExperimentConfig {
            sweep: sweep(SweepParameter::Eta, &ETAS),
            ..base(Mode::Loschmidt, "fig2".into())
        }],
        _ => return None,
    };
    Some(configs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_preset_is_valid() {
        for name in PRESET_NAMES {
            let configs = preset(name).unwrap();
            assert!(!configs.is_empty());
            for c in configs {
                c.validate().unwrap();
                assert_eq!(c.g, 1.0);
                assert_eq!(c.sigma, 10.0);
                assert_eq!(c.epsilon, 1e-5);
            }
        }
        assert!(preset("fig3").is_none());
    }

    #[test]
    fn fig1a_matches_legend() {
        let c = &preset("fig1a").unwrap()[0];
        let etas: Vec<f64> = c.children().iter().map(|c| c.config.eta).collect();
        assert_eq!(etas, ETAS);
        assert_eq!(c.mode, Mode::Distance);
    }

    #[test]
    fn fig1c_sweeps_hbar() {
        let configs = preset("fig1c").unwrap();
        assert_eq!(configs.len(), 3);
        assert!(configs.iter().all(|c| c.children().len() == 4));
    }
}
