//! Run configuration files and the built-in presets.
//!
//! Configs are TOML. Matrices can be written as full row-major arrays
//! (`[[1, 0], [0, 1]]`), as a diagonal (`{ diag = [1, 2] }`), or as a scaled
//! identity (`{ identity = 50.0 }`).

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{NrhcError, Result};
use crate::estimator::{DriveMode, EstimatorConfig};
use crate::hamiltonian::CostWeights;
use crate::model::ModelRegistry;
use crate::numerics::{Matrix, Vector};

pub const PRESETS: [&str; 2] = ["example1", "example2"];

pub const DEFAULT_DT: f64 = 0.01;
pub const DEFAULT_NODES: usize = 20;
pub const DEFAULT_HORIZON_FINAL: f64 = 0.1;
pub const DEFAULT_HORIZON_RATE: f64 = 0.01;
pub const DEFAULT_T_END: f64 = 20.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixSpec {
    Rows(Vec<Vec<f64>>),
    Diagonal {
        diag: Vec<f64>,
    },
    ScaledIdentity {
        identity: f64,
    },
}

impl MatrixSpec {
    fn to_matrix(&self, key: &str, dim: usize) -> Result<Matrix> {
        match self {
            MatrixSpec::Rows(rows) => {
                let n_rows = rows.len();
                let n_cols = rows.first().map_or(0, Vec::len);
                if rows.iter().any(|r| r.len() != n_cols) {
                    return Err(NrhcError::invalid(key, "rows have unequal lengths"));
                }
                Ok(Matrix::from_row_iterator(n_rows, n_cols, rows.iter().flatten().copied()))
            }
            MatrixSpec::Diagonal { diag } => Ok(Matrix::from_diagonal(&Vector::from_column_slice(diag))),
            MatrixSpec::ScaledIdentity { identity } => Ok(Matrix::identity(dim, dim) * *identity),
        }
    }

    fn from_matrix(m: &Matrix) -> Self {
        MatrixSpec::Rows(m.row_iter().map(|r| r.iter().copied().collect()).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HorizonSection {
    #[serde(rename = "final", default = "default_horizon_final")]
    pub final_length: f64,
    #[serde(default = "default_horizon_rate")]
    pub rate: f64,
}

impl Default for HorizonSection {
    fn default() -> Self {
        Self {
            final_length: DEFAULT_HORIZON_FINAL,
            rate: DEFAULT_HORIZON_RATE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightsSection {
    pub q: MatrixSpec,
    pub r: MatrixSpec,
}

/// On-disk form of an [`EstimatorConfig`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfigFile {
    pub model: String,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_t_end")]
    pub t_end: f64,
    #[serde(default = "default_nodes")]
    pub nodes: usize,
    #[serde(default)]
    pub drive_mode: DriveMode,
    pub x0: Vec<f64>,
    pub y0: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda0: Option<Vec<f64>>,
    pub a_s: MatrixSpec,
    #[serde(default)]
    pub horizon: HorizonSection,
    pub weights: WeightsSection,
}

fn default_dt() -> f64 {
    DEFAULT_DT
}
fn default_t_end() -> f64 {
    DEFAULT_T_END
}
fn default_nodes() -> usize {
    DEFAULT_NODES
}
fn default_horizon_final() -> f64 {
    DEFAULT_HORIZON_FINAL
}
fn default_horizon_rate() -> f64 {
    DEFAULT_HORIZON_RATE
}

impl RunConfigFile {
    pub fn into_config(self, registry: &ModelRegistry) -> Result<EstimatorConfig> {
        let model = registry.get(&self.model)?;
        let n = model.state_dim();
        let p = model.param_dim();
        let weights = CostWeights::new(self.weights.q.to_matrix("weights.q", n)?, self.weights.r.to_matrix("weights.r", p)?)?;
        let cfg = EstimatorConfig {
            model_name: self.model,
            weights,
            horizon_final: self.horizon.final_length,
            horizon_rate: self.horizon.rate,
            stabilization: self.a_s.to_matrix("a_s", n)?,
            dt: self.dt,
            nodes: self.nodes,
            t_end: self.t_end,
            x0: Vector::from_vec(self.x0),
            y0: Vector::from_vec(self.y0),
            lambda0: self.lambda0.map_or_else(|| Vector::zeros(n), Vector::from_vec),
            drive_mode: self.drive_mode,
        };
        cfg.validate(&model)?;
        Ok(cfg)
    }

    pub fn from_config(cfg: &EstimatorConfig) -> Self {
        Self {
            model: cfg.model_name.clone(),
            dt: cfg.dt,
            t_end: cfg.t_end,
            nodes: cfg.nodes,
            drive_mode: cfg.drive_mode,
            x0: cfg.x0.iter().copied().collect(),
            y0: cfg.y0.iter().copied().collect(),
            lambda0: Some(cfg.lambda0.iter().copied().collect()),
            a_s: MatrixSpec::from_matrix(&cfg.stabilization),
            horizon: HorizonSection {
                final_length: cfg.horizon_final,
                rate: cfg.horizon_rate,
            },
            weights: WeightsSection {
                q: MatrixSpec::from_matrix(cfg.weights.q()),
                r: MatrixSpec::from_matrix(cfg.weights.r()),
            },
        }
    }
}

/// Parses and validates config text. `origin` only labels error messages.
pub fn parse_config(text: &str, origin: &Path, registry: &ModelRegistry) -> Result<EstimatorConfig> {
    let file: RunConfigFile = toml::from_str(text).map_err(|e| NrhcError::ConfigParse {
        path: origin.to_path_buf(),
        message: e.to_string(),
    })?;
    file.into_config(registry)
}

pub fn load_config(path: impl AsRef<Path>) -> Result<EstimatorConfig> {
    load_config_with(path, &ModelRegistry::default())
}

pub fn load_config_with(path: impl AsRef<Path>, registry: &ModelRegistry) -> Result<EstimatorConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| NrhcError::io(path, e))?;
    parse_config(&text, path, registry)
}

/// Serializes a config in the file format, with every matrix written out in
/// full.
pub fn dump_config(cfg: &EstimatorConfig) -> String {
    toml::to_string(&RunConfigFile::from_config(cfg)).expect("config is always representable as TOML")
}

pub fn preset(name: &str) -> Result<EstimatorConfig> {
    let diag = |xs: &[f64]| Matrix::from_diagonal(&Vector::from_column_slice(xs));
    let vec = Vector::from_column_slice;
    match name {
        "example1" => Ok(EstimatorConfig {
            model_name: "lorenz".into(),
            weights: CostWeights::new(diag(&[1.0, 0.5, 0.1]), diag(&[0.02, 0.02]))?,
            horizon_final: 0.1,
            horizon_rate: 0.01,
            stabilization: Matrix::identity(3, 3) * 50.0,
            dt: 0.01,
            nodes: DEFAULT_NODES,
            t_end: 20.0,
            x0: vec(&[-3.0, -3.0, 15.0]),
            y0: vec(&[-6.0, -6.0, 22.0]),
            lambda0: Vector::zeros(3),
            drive_mode: DriveMode::Hold,
        }),
        "example2" => Ok(EstimatorConfig {
            model_name: "guay".into(),
            weights: CostWeights::new(diag(&[100.0, 110.0]), diag(&[0.1, 0.2]))?,
            horizon_final: 0.1,
            horizon_rate: 0.01,
            stabilization: Matrix::identity(2, 2) * 10.0,
            dt: 0.01,
            nodes: DEFAULT_NODES,
            t_end: 60.0,
            x0: vec(&[0.0, 0.0]),
            y0: vec(&[1.0, 2.0]),
            lambda0: Vector::zeros(2),
            drive_mode: DriveMode::Hold,
        }),
        other => Err(NrhcError::UnknownPreset(other.to_string())),
    }
}
