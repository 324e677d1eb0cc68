use serde::{Deserialize, Serialize};

use crate::dataset::Label;

/// Decision scores with their thresholded labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub scores: Vec<f64>,
    pub labels: Vec<Label>,
}

impl Prediction {
    pub fn from_scores(scores: Vec<f64>) -> Self {
        let labels = scores.iter().map(|&s| Label::from_score(s)).collect();
        Prediction { scores, labels }
    }
}

/// ADMM stopping rule.
///
/// The primal residual alone is not enough: whenever every labeled positive
/// scores above 1, the slack update makes it exactly zero while `β` is
/// still moving. The dual residual `μ₁‖h - h_prev‖` must settle too.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StopCriteria {
    /// Stop once both the primal and the dual residual are at or below this.
    pub tol: f64,
    pub max_iter: usize,
    /// Record a per-iteration objective trace in the report.
    pub record_trace: bool,
}

impl Default for StopCriteria {
    fn default() -> Self {
        StopCriteria {
            tol: 1e-6,
            max_iter: 2000,
            record_trace: true,
        }
    }
}

impl StopCriteria {
    pub fn satisfied(&self, primal: f64, dual: f64) -> bool {
        primal <= self.tol && dual <= self.tol
    }

    pub fn without_trace(self) -> Self {
        StopCriteria {
            record_trace: false,
            ..self
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SolveReport {
    pub iterations: usize,
    pub converged: bool,
    /// `‖1 - f(X_p) - h‖₂` after the last iteration.
    pub final_primal_residual: f64,
    /// `μ₁‖h - h_prev‖₂` after the last iteration.
    pub final_dual_residual: f64,
    /// Linear solvers: the unconstrained objective at each iterate.
    /// Kernel solvers: the primal residual at each iterate.
    pub objective_trace: Vec<f64>,
}
