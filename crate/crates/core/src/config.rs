//! TOML experiment configuration.
//!
//! ```toml
//! name = "example"
//!
//! [[model]]
//! F = [[1.1]]          # rows of the matrix, row-major
//! H = [[1.0]]
//! Q = [[1.0]]
//! R = [[1.0]]
//! x0_hat = [0.0]       # optional, defaults to zero
//!
//! [experiment]         # optional, every key has a default
//! horizon = [1, 20]    # inclusive range of N
//! gamma_tol = 1e-3
//! theta_step = 1e-3
//! cap = 1e6
//! pd_tol = 1e-9
//! curves = "curves.csv"
//! ```
//!
//! A bare number is accepted in place of a 1x1 matrix.

use std::ops::RangeInclusive;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::bounds::{DEFAULT_CAP, DEFAULT_GAMMA_TOL};
use crate::error::{Error, Result};
use crate::interpolation::DEFAULT_THETA_STEP;
use crate::linalg::{Matrix, Vector, DEFAULT_PD_TOL};
use crate::model::{ModelSet, SystemModel, ValidatedModelSet};

const BUNDLED: [(&str, &str); 4] = [
    ("table1_a", include_str!("../configs/table1_a.toml")),
    ("table1_b", include_str!("../configs/table1_b.toml")),
    ("table1_c", include_str!("../configs/table1_c.toml")),
    ("table1_d", include_str!("../configs/table1_d.toml")),
];

/// Names accepted by [`bundled_config`].
pub fn bundled_names() -> impl Iterator<Item = &'static str> {
    BUNDLED.iter().map(|(name, _)| *name)
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum MatrixSpec {
    Scalar(f64),
    Rows(Vec<Vec<f64>>),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    #[serde(rename = "F")]
    f: MatrixSpec,
    #[serde(rename = "H")]
    h: MatrixSpec,
    #[serde(rename = "Q")]
    q: MatrixSpec,
    #[serde(rename = "R")]
    r: MatrixSpec,
    x0_hat: Option<Vec<f64>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawExperiment {
    horizon: Option<[usize; 2]>,
    gamma_tol: Option<f64>,
    theta_step: Option<f64>,
    cap: Option<f64>,
    pd_tol: Option<f64>,
    curves: Option<PathBuf>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    name: Option<String>,
    model: Vec<RawModel>,
    #[serde(default)]
    experiment: RawExperiment,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub name: String,
    pub model_set: ValidatedModelSet,
    pub horizon: RangeInclusive<usize>,
    pub gamma_tol: f64,
    pub theta_step: f64,
    pub cap: f64,
    pub pd_tol: f64,
    /// Where the curves CSV goes; relative paths are kept as written.
    pub curves: Option<PathBuf>,
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

fn to_matrix(spec: MatrixSpec, field: &str, model: usize) -> Result<Matrix> {
    match spec {
        MatrixSpec::Scalar(v) => Ok(Matrix::from_element(1, 1, v)),
        MatrixSpec::Rows(rows) => {
            let cols = rows.first().map_or(0, Vec::len);
            if rows.is_empty() || cols == 0 || rows.iter().any(|r| r.len() != cols) {
                return Err(Error::Parse {
                    line: None,
                    message: format!("model {model}: field `{field}` must be a non-empty rectangular list of rows"),
                });
            }
            Ok(Matrix::from_row_iterator(
                rows.len(),
                cols,
                rows.into_iter().flatten(),
            ))
        }
    }
}

fn positive(value: f64, field: &str) -> Result<f64> {
    if !(value > 0.0 && value.is_finite()) {
        return Err(Error::Parse {
            line: None,
            message: format!("`experiment.{field}` must be positive, got {value}"),
        });
    }
    Ok(value)
}

/// Parses and validates a configuration from TOML text.
pub fn parse_config(text: &str, default_name: &str) -> Result<ExperimentSpec> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| Error::Parse {
        line: e.span().map(|s| line_of(text, s.start)),
        message: e.message().to_string(),
    })?;

    let mut models = Vec::with_capacity(raw.model.len());
    for (idx, m) in raw.model.into_iter().enumerate() {
        let f = to_matrix(m.f, "F", idx)?;
        let mut model = SystemModel::new(
            f,
            to_matrix(m.h, "H", idx)?,
            to_matrix(m.q, "Q", idx)?,
            to_matrix(m.r, "R", idx)?,
        );
        if let Some(x0) = m.x0_hat {
            model = model.with_x0_hat(Vector::from_vec(x0));
        }
        models.push(model);
    }
    let exp = raw.experiment;
    let pd_tol = match exp.pd_tol {
        Some(v) if v >= 0.0 && v.is_finite() => v,
        Some(v) => {
            return Err(Error::Parse {
                line: None,
                message: format!("`experiment.pd_tol` must be nonnegative, got {v}"),
            })
        }
        None => DEFAULT_PD_TOL,
    };
    let model_set = ModelSet::new(models).validate(pd_tol)?;
    let [lo, hi] = exp.horizon.unwrap_or([1, 20]);
    if lo > hi {
        return Err(Error::Parse {
            line: None,
            message: format!("`experiment.horizon` range [{lo}, {hi}] is empty"),
        });
    }
    Ok(ExperimentSpec {
        name: raw.name.unwrap_or_else(|| default_name.to_string()),
        model_set,
        horizon: lo..=hi,
        gamma_tol: positive(exp.gamma_tol.unwrap_or(DEFAULT_GAMMA_TOL), "gamma_tol")?,
        theta_step: positive(exp.theta_step.unwrap_or(DEFAULT_THETA_STEP), "theta_step")?,
        cap: positive(exp.cap.unwrap_or(DEFAULT_CAP), "cap")?,
        pd_tol,
        curves: exp.curves,
    })
}

pub fn bundled_config(name: &str) -> Option<ExperimentSpec> {
    BUNDLED
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(n, text)| parse_config(text, n).expect("bundled configuration is valid"))
}

/// Loads `path`; a path that does not exist but names a bundled
/// configuration loads that configuration instead.
pub fn load_config(path: impl AsRef<Path>) -> Result<ExperimentSpec> {
    let path = path.as_ref();
    if !path.exists() {
        if let Some(spec) = path.to_str().and_then(bundled_config) {
            return Ok(spec);
        }
    }
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let stem = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("config");
    parse_config(&text, stem)
}
