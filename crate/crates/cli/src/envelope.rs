//! Versioned TOML persistence for trained models.

use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use pual_core::{
    Classifier, Hyperparams, KernelModel, KernelSpec, LinearModel, ModelKind, SolveReport,
    Standardizer,
};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportSummary {
    pub iterations: usize,
    pub converged: bool,
    pub final_primal_residual: f64,
}

impl From<&SolveReport> for ReportSummary {
    fn from(r: &SolveReport) -> Self {
        ReportSummary {
            iterations: r.iterations,
            converged: r.converged,
            final_primal_residual: r.final_primal_residual,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Parameters {
    pub beta0: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega: Option<Vec<f64>>,
    /// Standardized `X_pu`, one row per training instance.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train_features: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b_matrix: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelEnvelope {
    pub format_version: u32,
    pub model_kind: ModelKind,
    pub hyperparams: Hyperparams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel: Option<KernelSpec>,
    pub standardizer: Standardizer,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<ReportSummary>,
    pub parameters: Parameters,
}

#[derive(Debug, thiserror::Error)]
pub enum EnvelopeError {
    #[error("cannot read model file: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed model file: {0}")]
    Parse(String),
    #[error("unsupported model format_version {0} (this build reads {FORMAT_VERSION})")]
    Version(u32),
    #[error("inconsistent model file: {0}")]
    Inconsistent(String),
}

fn to_rows(x: &Array2<f64>) -> Vec<Vec<f64>> {
    x.rows().into_iter().map(|r| r.to_vec()).collect()
}

fn from_rows(rows: &[Vec<f64>], what: &str) -> Result<Array2<f64>, EnvelopeError> {
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != m) {
        return Err(EnvelopeError::Inconsistent(format!(
            "{what} has rows of different lengths"
        )));
    }
    Array2::from_shape_vec((n, m), rows.concat())
        .map_err(|e| EnvelopeError::Inconsistent(e.to_string()))
}

impl ModelEnvelope {
    pub fn new(
        kind: ModelKind,
        hyperparams: Hyperparams,
        model: &Classifier,
        report: Option<&SolveReport>,
    ) -> Self {
        let (kernel, standardizer, parameters) = match model {
            Classifier::Linear(m) => (
                None,
                m.standardizer.clone(),
                Parameters {
                    beta0: m.beta0,
                    beta: Some(m.beta.clone()),
                    ..Parameters::default()
                },
            ),
            Classifier::Kernel(m) => (
                Some(m.kernel),
                m.standardizer.clone(),
                Parameters {
                    beta0: m.beta0,
                    omega: Some(m.omega.clone()),
                    train_features: Some(to_rows(&m.train_features)),
                    b_matrix: m.b_matrix.as_ref().map(to_rows),
                    ..Parameters::default()
                },
            ),
        };
        ModelEnvelope {
            format_version: FORMAT_VERSION,
            model_kind: kind,
            hyperparams,
            kernel,
            standardizer,
            report: report.map(ReportSummary::from),
            parameters,
        }
    }

    pub fn classifier(&self) -> Result<Classifier, EnvelopeError> {
        if self.format_version != FORMAT_VERSION {
            return Err(EnvelopeError::Version(self.format_version));
        }
        let p = &self.parameters;
        let m = self.standardizer.dim();
        if self.model_kind.is_kernel() {
            let (Some(omega), Some(rows), Some(kernel)) =
                (&p.omega, &p.train_features, self.kernel)
            else {
                return Err(EnvelopeError::Inconsistent(
                    "kernel model needs omega, train_features and kernel".into(),
                ));
            };
            let train_features = from_rows(rows, "train_features")?;
            if train_features.nrows() != omega.len() || train_features.ncols() != m {
                return Err(EnvelopeError::Inconsistent(
                    "train_features does not match omega and standardizer".into(),
                ));
            }
            let b_matrix = p
                .b_matrix
                .as_deref()
                .map(|b| from_rows(b, "b_matrix"))
                .transpose()?;
            if matches!(kernel, KernelSpec::LinearViaB { .. })
                && b_matrix.as_ref().is_none_or(|b| b.dim() != (m, m))
            {
                return Err(EnvelopeError::Inconsistent(
                    "linear-via-b model needs an m x m b_matrix".into(),
                ));
            }
            Ok(Classifier::Kernel(KernelModel {
                omega: omega.clone(),
                beta0: p.beta0,
                train_features,
                kernel,
                b_matrix,
                standardizer: self.standardizer.clone(),
            }))
        } else {
            let Some(beta) = &p.beta else {
                return Err(EnvelopeError::Inconsistent(
                    "linear model needs beta".into(),
                ));
            };
            if beta.len() != m {
                return Err(EnvelopeError::Inconsistent(
                    "beta length does not match the standardizer".into(),
                ));
            }
            Ok(Classifier::Linear(LinearModel {
                beta: beta.clone(),
                beta0: p.beta0,
                standardizer: self.standardizer.clone(),
            }))
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("envelope fields are TOML-representable")
    }

    pub fn from_toml(text: &str) -> Result<Self, EnvelopeError> {
        #[derive(Deserialize)]
        struct Version {
            format_version: u32,
        }
        let v: Version =
            toml::from_str(text).map_err(|e| EnvelopeError::Parse(e.message().to_string()))?;
        if v.format_version != FORMAT_VERSION {
            return Err(EnvelopeError::Version(v.format_version));
        }
        toml::from_str(text).map_err(|e| EnvelopeError::Parse(e.message().to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<usize, EnvelopeError> {
        let text = self.to_toml();
        std::fs::write(path, &text)?;
        Ok(text.len())
    }

    pub fn load(path: &Path) -> Result<Self, EnvelopeError> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }
}
