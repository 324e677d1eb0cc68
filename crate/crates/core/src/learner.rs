//! The four trainable model kinds behind one interface, so that tuning and
//! the command line can treat them alike.

use std::fmt;
use std::str::FromStr;

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::dataset::{Label, PUDataset};
use crate::error::{Error, Result};
use crate::gllc::{fit_gllc_kernel_problem, fit_gllc_linear_problem, GllcModel};
use crate::model::{Prediction, SolveReport, StopCriteria};
use crate::problem::TrainingProblem;
use crate::pual_kernel::{fit_kernel_problem, KernelModel, KernelSpec};
use crate::pual_linear::{fit_problem, Hyperparams, LinearModel};
use crate::similarity::KnnParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    PualLinear,
    PualKernel,
    GllcLinear,
    GllcKernel,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [
        ModelKind::PualLinear,
        ModelKind::PualKernel,
        ModelKind::GllcLinear,
        ModelKind::GllcKernel,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::PualLinear => "pual-linear",
            ModelKind::PualKernel => "pual-kernel",
            ModelKind::GllcLinear => "gllc-linear",
            ModelKind::GllcKernel => "gllc-kernel",
        }
    }

    pub fn is_kernel(self) -> bool {
        matches!(self, ModelKind::PualKernel | ModelKind::GllcKernel)
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::invalid("model", format!("unknown model kind `{s}`")))
    }
}

/// Which computable kernel a kernel model uses during tuning.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelChoice {
    /// RBF; the `λ` slot of a candidate carries the width.
    Rbf,
    /// Linear-via-B with `B` built from the candidate itself.
    LinearViaB,
}

/// One point of a tuning grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub lambda: f64,
    pub sigma: f64,
    pub cu: f64,
}

impl Candidate {
    pub fn new(lambda: f64, sigma: f64, cu: f64) -> Self {
        Candidate { lambda, sigma, cu }
    }

    /// Lexicographic comparison on `(λ, σ, C_u)`.
    pub fn lex_cmp(&self, other: &Candidate) -> std::cmp::Ordering {
        self.lambda
            .total_cmp(&other.lambda)
            .then(self.sigma.total_cmp(&other.sigma))
            .then(self.cu.total_cmp(&other.cu))
    }
}

/// A trained scorer of either shape.
#[derive(Debug, Clone, PartialEq)]
pub enum Classifier {
    Linear(LinearModel),
    Kernel(KernelModel),
}

impl Classifier {
    pub fn predict(&self, features: ArrayView2<f64>) -> Result<Prediction> {
        match self {
            Classifier::Linear(m) => m.predict(features),
            Classifier::Kernel(m) => m.predict(features),
        }
    }
}

impl From<GllcModel> for Classifier {
    fn from(m: GllcModel) -> Self {
        match m {
            GllcModel::Linear(l) => Classifier::Linear(l),
            GllcModel::Kernel(k) => Classifier::Kernel(k),
        }
    }
}

/// Fits any model kind on a prepared problem. GLLC fits report no
/// iterations.
pub fn fit_model(
    problem: &TrainingProblem,
    kind: ModelKind,
    hp: &Hyperparams,
    kernel: Option<&KernelSpec>,
    stop: &StopCriteria,
) -> Result<(Classifier, Option<SolveReport>)> {
    let need_kernel =
        || kernel.ok_or_else(|| Error::invalid("kernel", format!("{kind} needs a kernel")));
    match kind {
        ModelKind::PualLinear => {
            let (m, r) = fit_problem(problem, hp, stop)?;
            Ok((Classifier::Linear(m), Some(r)))
        }
        ModelKind::PualKernel => {
            let (m, r) = fit_kernel_problem(problem, hp, need_kernel()?, stop)?;
            Ok((Classifier::Kernel(m), Some(r)))
        }
        ModelKind::GllcLinear => Ok((fit_gllc_linear_problem(problem, hp)?.into(), None)),
        ModelKind::GllcKernel => Ok((
            fit_gllc_kernel_problem(problem, hp, need_kernel()?)?.into(),
            None,
        )),
    }
}

/// Anything cross-validation can train on a fold and score on its held-out
/// part.
pub trait PuLearner: Sync {
    /// Neighbor count the fold problems are prepared with.
    fn knn(&self) -> usize;

    /// Whether fold problems z-score their features.
    fn standardize(&self) -> bool {
        true
    }

    /// Labels predicted for the held-out labeled positives and unlabeled rows.
    fn fit_predict(
        &self,
        problem: &TrainingProblem,
        candidate: &Candidate,
        held_out: &PUDataset,
    ) -> Result<(Vec<Label>, Vec<Label>)>;
}

/// The learner used by the tuning commands.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelLearner {
    pub kind: ModelKind,
    pub kernel: KernelChoice,
    pub cp: f64,
    pub mu1: f64,
    pub k: usize,
    pub standardize: bool,
    pub stop: StopCriteria,
}

impl ModelLearner {
    /// `C_p = 1`, `μ₁ = 1`, `K = 5`, standardized features, RBF for kernel
    /// kinds, no traces.
    pub fn new(kind: ModelKind) -> Self {
        ModelLearner {
            kind,
            kernel: KernelChoice::Rbf,
            cp: 1.0,
            mu1: 1.0,
            k: 5,
            standardize: true,
            stop: StopCriteria::default().without_trace(),
        }
    }

    pub fn hyperparams(&self, c: &Candidate) -> Hyperparams {
        Hyperparams {
            cp: self.cp,
            cu: c.cu,
            lambda: c.lambda,
            mu1: self.mu1,
            knn: KnnParams::new(self.k, c.sigma),
        }
    }

    pub fn kernel_spec(&self, c: &Candidate) -> Option<KernelSpec> {
        if !self.kind.is_kernel() {
            return None;
        }
        Some(match self.kernel {
            KernelChoice::Rbf => KernelSpec::Rbf { width: c.lambda },
            KernelChoice::LinearViaB => KernelSpec::LinearViaB {
                b_params: self.hyperparams(c),
            },
        })
    }

    pub fn fit(&self, problem: &TrainingProblem, c: &Candidate) -> Result<Classifier> {
        let hp = self.hyperparams(c);
        let kernel = self.kernel_spec(c);
        Ok(fit_model(problem, self.kind, &hp, kernel.as_ref(), &self.stop)?.0)
    }
}

impl PuLearner for ModelLearner {
    fn knn(&self) -> usize {
        self.k
    }

    fn standardize(&self) -> bool {
        self.standardize
    }

    fn fit_predict(
        &self,
        problem: &TrainingProblem,
        candidate: &Candidate,
        held_out: &PUDataset,
    ) -> Result<(Vec<Label>, Vec<Label>)> {
        let model = self.fit(problem, candidate)?;
        let p = model.predict(held_out.features_p())?.labels;
        let u = model.predict(held_out.features_u())?.labels;
        Ok((p, u))
    }
}
