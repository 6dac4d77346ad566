//! Experiment configuration: TOML (or JSON) files plus `key=value` overrides.

use std::fmt;
use std::path::{Path, PathBuf};

use ngpm_core::analysis::DEFAULT_SKIP_INITIAL;
use ngpm_core::{EvolutionGuards, FitModel, ModelParams};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_GRID_POINTS: usize = 8192;
pub const DEFAULT_MAX_GRID_POINTS: usize = 65536;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot parse configuration: {0}")]
    Parse(String),
    #[error("invalid override `{0}`, expected key=value")]
    BadOverride(String),
    #[error("invalid `{field}`: {message}")]
    Invalid { field: String, message: String },
}

fn invalid(field: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field: field.to_string(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Translated pair: `D` and `1 - F_O`.
    Distance,
    /// Perturbed-`g` pair: `1 - L`.
    Loschmidt,
    /// Single state: norm and momentum moments.
    Energy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    G,
    Eta,
    Hbar,
    Epsilon,
    GPerturbation,
    Sigma,
}

impl fmt::Display for SweepParameter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            SweepParameter::G => "g",
            SweepParameter::Eta => "eta",
            SweepParameter::Hbar => "hbar",
            SweepParameter::Epsilon => "epsilon",
            SweepParameter::GPerturbation => "g_perturbation",
            SweepParameter::Sigma => "sigma",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepAxis {
    pub parameter: SweepParameter,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitRequest {
    pub models: Vec<FitModel>,
    /// Lower window bound; defaults per model and mode.
    pub y_min: Option<f64>,
    /// Upper window bound; defaults to 0.5 for distance-like series.
    pub y_max: Option<f64>,
    pub skip_initial: usize,
}

impl Default for FitRequest {
    fn default() -> Self {
        Self {
            models: vec![FitModel::Exponential, FitModel::Superexponential],
            y_min: None,
            y_max: None,
            skip_initial: DEFAULT_SKIP_INITIAL,
        }
    }
}

fn default_name() -> String {
    "run".into()
}
fn default_grid_points() -> usize {
    DEFAULT_GRID_POINTS
}
fn default_max_grid_points() -> usize {
    DEFAULT_MAX_GRID_POINTS
}
fn default_sigma() -> f64 {
    10.0
}
fn default_epsilon() -> f64 {
    1e-5
}
fn default_output_dir() -> PathBuf {
    PathBuf::from("results")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_name")]
    pub name: String,
    pub mode: Mode,
    pub g: f64,
    pub eta: f64,
    pub hbar: f64,
    pub n_kicks: usize,
    #[serde(default = "default_grid_points")]
    pub grid_points: usize,
    /// Largest grid the truncation escalation may reach.
    #[serde(default = "default_max_grid_points")]
    pub max_grid_points: usize,
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    #[serde(default)]
    pub center: f64,
    /// Translation of the partner state and of the FOTOC operator.
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    /// Shift of `g` for the Loschmidt pair; falls back to `epsilon`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g_perturbation: Option<f64>,
    #[serde(default)]
    pub guards: EvolutionGuards,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepAxis>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub fit: FitRequest,
}

impl ExperimentConfig {
    pub fn params(&self) -> ModelParams {
        ModelParams {
            g: self.g,
            eta: self.eta,
            hbar_eff: self.hbar,
        }
    }

    pub fn g_perturbation(&self) -> f64 {
        self.g_perturbation.unwrap_or(self.epsilon)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        for (field, v) in [
            ("g", self.g),
            ("eta", self.eta),
            ("hbar", self.hbar),
            ("sigma", self.sigma),
            ("center", self.center),
            ("epsilon", self.epsilon),
        ] {
            if !v.is_finite() {
                return Err(invalid(field, format!("must be finite, got {v}")));
            }
        }
        if self.hbar <= 0.0 {
            return Err(invalid("hbar", "must be > 0"));
        }
        if self.eta < 0.0 {
            return Err(invalid("eta", "must be >= 0"));
        }
        if self.sigma <= 0.0 {
            return Err(invalid("sigma", "must be > 0"));
        }
        if self.epsilon < 0.0 {
            return Err(invalid("epsilon", "must be >= 0"));
        }
        if self.n_kicks < 1 {
            return Err(invalid("n_kicks", "must be >= 1"));
        }
        if !self.grid_points.is_power_of_two() || self.grid_points < 8 {
            return Err(invalid(
                "grid_points",
                format!("{} is not a power of two >= 8", self.grid_points),
            ));
        }
        if !self.max_grid_points.is_power_of_two() || self.max_grid_points < self.grid_points {
            return Err(invalid(
                "max_grid_points",
                "must be a power of two no smaller than grid_points",
            ));
        }
        if let Some(gp) = self.g_perturbation {
            if !gp.is_finite() {
                return Err(invalid("g_perturbation", "must be finite"));
            }
        }
        if self.mode == Mode::Loschmidt && self.g_perturbation() == 0.0 {
            return Err(invalid(
                "g_perturbation",
                "must be nonzero in loschmidt mode",
            ));
        }
        if self.mode == Mode::Distance && self.epsilon == 0.0 {
            return Err(invalid("epsilon", "must be nonzero in distance mode"));
        }
        self.guards.validate().map_err(|m| invalid("guards", m))?;
        if let Some(sweep) = &self.sweep {
            if sweep.values.is_empty() {
                return Err(invalid("sweep.values", "must not be empty"));
            }
            for (i, child) in self.children().into_iter().enumerate() {
                child.config.validate().map_err(|e| match e {
                    ConfigError::Invalid { field, message } => invalid(
                        "sweep.values",
                        format!("value #{i} makes `{field}` invalid: {message}"),
                    ),
                    other => other,
                })?;
            }
        }
        if self.fit.models.is_empty() {
            return Err(invalid("fit.models", "must name at least one model"));
        }
        Ok(())
    }

    /// One config per sweep value (or `self` alone), each without a sweep.
    pub fn children(&self) -> Vec<ChildConfig> {
        let Some(sweep) = &self.sweep else {
            let mut config = self.clone();
            config.sweep = None;
            return vec![ChildConfig {
                label: "trajectory".into(),
                sweep_value: None,
                config,
            }];
        };
        sweep
            .values
            .iter()
            .map(|&value| {
                let mut config = self.clone();
                config.sweep = None;
                match sweep.parameter {
                    SweepParameter::G => config.g = value,
                    SweepParameter::Eta => config.eta = value,
                    SweepParameter::Hbar => config.hbar = value,
                    SweepParameter::Epsilon => config.epsilon = value,
                    SweepParameter::GPerturbation => config.g_perturbation = Some(value),
                    SweepParameter::Sigma => config.sigma = value,
                }
                ChildConfig {
                    label: format!("{}_{}", sweep.parameter, value),
                    sweep_value: Some(value),
                    config,
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChildConfig {
    /// File-safe name of the child run.
    pub label: String,
    pub sweep_value: Option<f64>,
    pub config: ExperimentConfig,
}

/// Parses an override value as a TOML literal, falling back to a string;
/// a bare comma list becomes an array.
fn parse_override_value(raw: &str) -> toml::Value {
    let probe = format!("v = {raw}");
    if let Ok(table) = probe.parse::<toml::Table>() {
        if let Some(v) = table.get("v") {
            return v.clone();
        }
    }
    if raw.contains(',') {
        let items: Vec<toml::Value> = raw
            .split(',')
            .map(|s| parse_override_value(s.trim()))
            .collect();
        return toml::Value::Array(items);
    }
    toml::Value::String(raw.to_string())
}

fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<(), ConfigError> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| ConfigError::BadOverride(assignment.to_string()))?;
    let path: Vec<&str> = key.trim().split('.').collect();
    if path.iter().any(|p| p.is_empty()) {
        return Err(ConfigError::BadOverride(assignment.to_string()));
    }
    let mut cursor = table;
    for part in &path[..path.len() - 1] {
        let entry = cursor
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cursor = entry
            .as_table_mut()
            .ok_or_else(|| invalid(key.trim(), format!("`{part}` is not a table")))?;
    }
    cursor.insert(
        path[path.len() - 1].to_string(),
        parse_override_value(raw.trim()),
    );
    Ok(())
}

fn read_table(path: &Path) -> Result<toml::Table, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    if path.extension().is_some_and(|e| e == "json") {
        let value: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        toml::Table::try_from(value).map_err(|e| ConfigError::Parse(e.to_string()))
    } else {
        text.parse::<toml::Table>()
            .map_err(|e| ConfigError::Parse(e.to_string()))
    }
}

/// Builds a validated config from an optional file plus `key=value` overrides
/// (applied after the file, so they win).
pub fn load_config(
    file: Option<&Path>,
    overrides: &[String],
) -> Result<ExperimentConfig, ConfigError> {
    let mut table = match file {
        Some(path) => read_table(path)?,
        None => toml::Table::new(),
    };
    for assignment in overrides {
        apply_override(&mut table, assignment)?;
    }
    from_table(table)
}

pub fn from_table(table: toml::Table) -> Result<ExperimentConfig, ConfigError> {
    let config: ExperimentConfig = toml::Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
    config.validate()?;
    Ok(config)
}

pub fn parse_config_str(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let table = text
        .parse::<toml::Table>()
        .map_err(|e| ConfigError::Parse(e.to_string()))?;
    from_table(table)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
        g = 1
        eta = 0.05
        hbar = 1
        n_kicks = 50
        mode = "distance"
    "#;

    #[test]
    fn minimal_config_gets_defaults() {
        let c = parse_config_str(MINIMAL).unwrap();
        assert_eq!(c.grid_points, 8192);
        assert_eq!(c.max_grid_points, 65536);
        assert_eq!(c.sigma, 10.0);
        assert_eq!(c.epsilon, 1e-5);
        assert_eq!(c.guards, EvolutionGuards::default());
        assert_eq!(c.fit, FitRequest::default());
        assert_eq!(c.g_perturbation(), 1e-5);
        assert_eq!(c.children().len(), 1);
    }

    #[test]
    fn grid_points_must_be_power_of_two() {
        let text = format!("{MINIMAL}\ngrid_points = 1000");
        match parse_config_str(&text).unwrap_err() {
            ConfigError::Invalid { field, .. } => assert_eq!(field, "grid_points"),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn missing_field_is_named() {
        let err = parse_config_str("g = 1\neta = 0\nhbar = 1\nmode = \"distance\"").unwrap_err();
        assert!(err.to_string().contains("n_kicks"), "{err}");
    }

    #[test]
    fn unknown_field_rejected() {
        let text = format!("{MINIMAL}\ngama = 2");
        assert!(parse_config_str(&text).is_err());
    }

    #[test]
    fn eta_sweep_children() {
        let text = format!(
            "{MINIMAL}\n[sweep]\nparameter = \"eta\"\nvalues = [0, 0.01, 0.02, 0.03, 0.05]"
        );
        let c = parse_config_str(&text).unwrap();
        let children = c.children();
        assert_eq!(children.len(), 5);
        let etas: Vec<f64> = children.iter().map(|c| c.config.eta).collect();
        assert_eq!(etas, vec![0.0, 0.01, 0.02, 0.03, 0.05]);
        assert!(children.iter().all(|c| c.config.sweep.is_none()));
        assert_eq!(children[1].label, "eta_0.01");
    }

    #[test]
    fn sweep_values_are_validated() {
        let text = format!("{MINIMAL}\n[sweep]\nparameter = \"hbar\"\nvalues = [1, 0]");
        match parse_config_str(&text).unwrap_err() {
            ConfigError::Invalid { field, message } => {
                assert_eq!(field, "sweep.values");
                assert!(message.contains("hbar"));
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn overrides_win_over_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        std::fs::write(&path, MINIMAL).unwrap();
        let c = load_config(
            Some(&path),
            &[
                "eta=0.02".into(),
                "guards.edge_fraction_max=1e-6".into(),
                "sweep.parameter=hbar".into(),
                "sweep.values=0.5,1".into(),
                "mode=loschmidt".into(),
            ],
        )
        .unwrap();
        assert_eq!(c.eta, 0.02);
        assert_eq!(c.guards.edge_fraction_max, 1e-6);
        assert_eq!(c.mode, Mode::Loschmidt);
        let sweep = c.sweep.unwrap();
        assert_eq!(sweep.parameter, SweepParameter::Hbar);
        assert_eq!(sweep.values, vec![0.5, 1.0]);
    }

    #[test]
    fn overrides_alone_build_a_config() {
        let c = load_config(
            None,
            &[
                "g=1".into(),
                "eta=0".into(),
                "hbar=1".into(),
                "n_kicks=10".into(),
                "mode=energy".into(),
            ],
        )
        .unwrap();
        assert_eq!(c.mode, Mode::Energy);
        assert!(load_config(None, &["oops".into()]).is_err());
    }

    #[test]
    fn json_config_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(
            &path,
            r#"{"g": 1, "eta": 0.05, "hbar": 1, "n_kicks": 50, "mode": "distance"}"#,
        )
        .unwrap();
        assert_eq!(load_config(Some(&path), &[]).unwrap().n_kicks, 50);
    }

    #[test]
    fn missing_file_is_io_error() {
        let err = load_config(Some(Path::new("/nonexistent/c.toml")), &[]).unwrap_err();
        assert!(matches!(err, ConfigError::Io { .. }));
    }
}
