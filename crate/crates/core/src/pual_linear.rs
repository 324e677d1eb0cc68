//! PUAL with a linear decision boundary.
//!
//! The objective puts a hinge loss on labeled positives, a squared loss on
//! unlabeled instances (treated as negative), a ridge term and the local
//! constraint `fᵀRf`:
//!
//! ```text
//! λ/2 βᵀβ + C_p Σ_p [1 - f(x)]₊ + C_u Σ_u (1 + f(x))² + fᵀ R f,   f(x) = xᵀβ + β₀
//! ```
//!
//! It is solved by ADMM on the split `h = 1 - (X_p β + β₀)`: an exact
//! quadratic step in `(β, β₀)`, a per-coordinate soft-threshold step in `h`,
//! and scaled dual ascent on `u_h`.

use ndarray::{s, Array1, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::dataset::{PUDataset, Standardizer};
use crate::error::{Error, Result};
use crate::linalg::{factor_with_jitter, Cholesky};
use crate::model::{Prediction, SolveReport, StopCriteria};
use crate::problem::{BlockMoments, TrainingProblem};
use crate::similarity::{KnnParams, LaplacianForms, LaplacianMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub cp: f64,
    pub cu: f64,
    /// Ridge weight. For RBF-kernel fits this slot carries the kernel width.
    pub lambda: f64,
    /// ADMM step size.
    pub mu1: f64,
    pub knn: KnnParams,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            cp: 1.0,
            cu: 0.1,
            lambda: 1.0,
            mu1: 1.0,
            knn: KnnParams::new(5, 1.0),
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &'static str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::invalid(
                    name,
                    format!("must be a positive finite number, got {v}"),
                ))
            }
        };
        positive("cp", self.cp)?;
        positive("cu", self.cu)?;
        positive("lambda", self.lambda)?;
        positive("mu1", self.mu1)?;
        if !(self.knn.sigma > 0.0) || !self.knn.sigma.is_finite() {
            return Err(Error::NonPositiveSigma(self.knn.sigma));
        }
        if self.knn.k == 0 {
            return Err(Error::invalid("knn", "K must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdmmState {
    pub h: Array1<f64>,
    pub u_h: Array1<f64>,
    pub iteration: usize,
    pub primal_residual: f64,
}

impl AdmmState {
    /// `h = 0`, `u_h = 0`; the residual is that of `β = 0, β₀ = 0`.
    pub fn zeros(n_p: usize) -> Self {
        AdmmState {
            h: Array1::zeros(n_p),
            u_h: Array1::zeros(n_p),
            iteration: 0,
            primal_residual: (n_p as f64).sqrt(),
        }
    }
}

/// The blocks of the `(β, β₀)` normal equations.
#[derive(Debug, Clone, PartialEq)]
pub struct BetaSystem {
    pub m11: Array2<f64>,
    pub m12: Array1<f64>,
    pub m21: Array1<f64>,
    pub m22: f64,
    pub m1: Array1<f64>,
    pub m2: f64,
}

impl BetaSystem {
    /// Assembles the system from precomputed Laplacian forms.
    pub fn assemble(
        data: &PUDataset,
        forms: &LaplacianForms,
        hp: &Hyperparams,
        state: &AdmmState,
    ) -> Result<Self> {
        check_forms(data, forms)?;
        check_state(data, state)?;
        let moments = BlockMoments::new(data);
        let (lhs, m12) = state_free_blocks(data, &moments, forms, hp);
        let m11 = lhs.slice(s![..data.m(), ..data.m()]).to_owned();
        let m22 = lhs[[data.m(), data.m()]];
        let (m1, m2) = right_hand_side(data.features_p(), &moments, hp, state);
        Ok(BetaSystem {
            m11,
            m21: m12.clone(),
            m12,
            m22,
            m1,
            m2,
        })
    }

    pub fn dim(&self) -> usize {
        self.m12.len()
    }

    /// `[[M11, M12], [M21, M22]]`.
    pub fn bordered(&self) -> Array2<f64> {
        let m = self.dim();
        let mut a = Array2::zeros((m + 1, m + 1));
        a.slice_mut(s![..m, ..m]).assign(&self.m11);
        a.slice_mut(s![..m, m]).assign(&self.m12);
        a.slice_mut(s![m, ..m]).assign(&self.m21);
        a[[m, m]] = self.m22;
        a
    }

    pub fn rhs(&self) -> Array1<f64> {
        let m = self.dim();
        let mut b = Array1::zeros(m + 1);
        b.slice_mut(s![..m]).assign(&self.m1);
        b[m] = self.m2;
        b
    }
}

/// Assembles the system against a dense `R` over the stacked features.
pub fn assemble_beta_system(
    data: &PUDataset,
    r: &LaplacianMatrix,
    hp: &Hyperparams,
    state: &AdmmState,
) -> Result<BetaSystem> {
    let forms = LaplacianForms::new(r, data.stacked().view())?;
    BetaSystem::assemble(data, &forms, hp, state)
}

fn check_forms(data: &PUDataset, forms: &LaplacianForms) -> Result<()> {
    if forms.n() != data.n() {
        return Err(Error::DimensionMismatch {
            expected: data.n(),
            found: forms.n(),
        });
    }
    if forms.m() != data.m() {
        return Err(Error::DimensionMismatch {
            expected: data.m(),
            found: forms.m(),
        });
    }
    Ok(())
}

fn check_state(data: &PUDataset, state: &AdmmState) -> Result<()> {
    for len in [state.h.len(), state.u_h.len()] {
        if len != data.n_p() {
            return Err(Error::DimensionMismatch {
                expected: data.n_p(),
                found: len,
            });
        }
    }
    Ok(())
}

/// The state-independent part: the full bordered matrix and `M12`.
fn state_free_blocks(
    data: &PUDataset,
    moments: &BlockMoments,
    forms: &LaplacianForms,
    hp: &Hyperparams,
) -> (Array2<f64>, Array1<f64>) {
    let m = data.m();
    let (cu, mu) = (hp.cu, hp.mu1);
    let mut m11 = &moments.xut_xu * (2.0 * cu) + &forms.xt_r_x * 2.0 + &moments.xpt_xp * mu;
    for i in 0..m {
        m11[[i, i]] += hp.lambda;
    }
    let m12 = &moments.xu_sum * (2.0 * cu) + &forms.xt_r_1 * 2.0 + &moments.xp_sum * mu;
    let m22 = 2.0 * cu * data.n_u() as f64 + 2.0 * forms.one_r_one + mu * data.n_p() as f64;
    let mut a = Array2::zeros((m + 1, m + 1));
    a.slice_mut(s![..m, ..m]).assign(&m11);
    a.slice_mut(s![..m, m]).assign(&m12);
    a.slice_mut(s![m, ..m]).assign(&m12);
    a[[m, m]] = m22;
    (a, m12)
}

/// `m1 = -2C_u X_uᵀ1 + X_pᵀu_h + μ₁X_pᵀ(1 - h)` and
/// `m2 = -2C_u n_u + u_hᵀ1 + μ₁(1 - h)ᵀ1`.
fn right_hand_side(
    xp: ArrayView2<f64>,
    moments: &BlockMoments,
    hp: &Hyperparams,
    state: &AdmmState,
) -> (Array1<f64>, f64) {
    let n_u = moments.n_u as f64;
    let v: Array1<f64> = state
        .u_h
        .iter()
        .zip(state.h.iter())
        .map(|(u, h)| u + hp.mu1 * (1.0 - h))
        .collect();
    let m1 = xp.t().dot(&v) - &moments.xu_sum * (2.0 * hp.cu);
    let m2 = -2.0 * hp.cu * n_u + v.sum();
    (m1, m2)
}

/// Solves the bordered system by Cholesky, with one jittered retry.
pub fn solve_beta(system: &BetaSystem) -> Result<(Array1<f64>, f64)> {
    let chol = factor_with_jitter(&system.bordered(), system.dim())
        .map_err(|condition| Error::SingularSystem { condition })?;
    let x = chol.solve(system.rhs().view());
    let m = system.dim();
    Ok((x.slice(s![..m]).to_owned(), x[m]))
}

/// Minimizer of `c[x]₊ + ½(x - d)²` for `c > 0`.
pub fn soft_threshold(c: f64, d: f64) -> Result<f64> {
    if !(c > 0.0) {
        return Err(Error::NonPositiveC(c));
    }
    Ok(shrink(c, d))
}

#[inline]
pub(crate) fn shrink(c: f64, d: f64) -> f64 {
    if d > c {
        d - c
    } else if d >= 0.0 {
        0.0
    } else {
        d
    }
}

fn positive_scores(xp: ArrayView2<f64>, beta: &Array1<f64>, beta0: f64) -> Array1<f64> {
    xp.dot(beta) + beta0
}

/// `hᵢ = s_{C_p/μ₁}(1 + u_hᵢ/μ₁ - (xᵢᵀβ + β₀))` over the labeled positives.
pub fn update_h(
    data: &PUDataset,
    beta: &Array1<f64>,
    beta0: f64,
    hp: &Hyperparams,
    state: &AdmmState,
) -> Result<Array1<f64>> {
    check_state(data, state)?;
    let scores = positive_scores(data.features_p(), beta, beta0);
    Ok(h_from_scores(&scores, hp, &state.u_h))
}

pub(crate) fn h_from_scores(
    scores: &Array1<f64>,
    hp: &Hyperparams,
    u_h: &Array1<f64>,
) -> Array1<f64> {
    let c = hp.cp / hp.mu1;
    scores
        .iter()
        .zip(u_h.iter())
        .map(|(f, u)| shrink(c, 1.0 + u / hp.mu1 - f))
        .collect()
}

/// `u_h + μ₁(1 - (X_p β + β₀) - h)`, with `h` taken from `state`.
pub fn update_dual(
    data: &PUDataset,
    beta: &Array1<f64>,
    beta0: f64,
    state: &AdmmState,
    mu1: f64,
) -> Result<Array1<f64>> {
    check_state(data, state)?;
    let scores = positive_scores(data.features_p(), beta, beta0);
    Ok(state
        .u_h
        .iter()
        .zip(scores.iter().zip(state.h.iter()))
        .map(|(u, (f, h))| u + mu1 * (1.0 - f - h))
        .collect())
}

/// A trained linear scorer `f(x) = xᵀβ + β₀` in standardized coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub beta: Vec<f64>,
    pub beta0: f64,
    pub standardizer: Standardizer,
}

impl LinearModel {
    pub fn dim(&self) -> usize {
        self.beta.len()
    }

    /// Scores raw (unstandardized) features.
    pub fn predict(&self, features: ArrayView2<f64>) -> Result<Prediction> {
        if features.ncols() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: features.ncols(),
            });
        }
        let x = self.standardizer.apply(features)?;
        Ok(Prediction::from_scores(self.scores_transformed(x.view())))
    }

    pub(crate) fn scores_transformed(&self, x: ArrayView2<f64>) -> Vec<f64> {
        x.rows()
            .into_iter()
            .map(|r| r.iter().zip(&self.beta).map(|(a, b)| a * b).sum::<f64>() + self.beta0)
            .collect()
    }
}

pub fn predict_linear(model: &LinearModel, features: ArrayView2<f64>) -> Result<Prediction> {
    model.predict(features)
}

/// The unconstrained objective, evaluated literally against a dense `R`.
pub fn objective_value(
    data: &PUDataset,
    r: &LaplacianMatrix,
    hp: &Hyperparams,
    beta: &Array1<f64>,
    beta0: f64,
) -> Result<f64> {
    if r.n() != data.n() {
        return Err(Error::DimensionMismatch {
            expected: data.n(),
            found: r.n(),
        });
    }
    if beta.len() != data.m() {
        return Err(Error::DimensionMismatch {
            expected: data.m(),
            found: beta.len(),
        });
    }
    let ridge = 0.5 * hp.lambda * beta.dot(beta);
    let hinge: f64 = positive_scores(data.features_p(), beta, beta0)
        .iter()
        .map(|f| (1.0 - f).max(0.0))
        .sum();
    let squared: f64 = (data.features_u().dot(beta) + beta0)
        .iter()
        .map(|f| (1.0 + f) * (1.0 + f))
        .sum();
    let f = data.stacked().dot(beta) + beta0;
    let local = f.dot(&r.matrix().dot(&f));
    Ok(ridge + hp.cp * hinge + hp.cu * squared + local)
}

/// The same objective from moments and forms, given the positives' scores.
fn objective_from_moments(
    moments: &BlockMoments,
    forms: &LaplacianForms,
    hp: &Hyperparams,
    beta: &Array1<f64>,
    beta0: f64,
    scores_p: &Array1<f64>,
) -> f64 {
    let ridge = 0.5 * hp.lambda * beta.dot(beta);
    let hinge: f64 = scores_p.iter().map(|f| (1.0 - f).max(0.0)).sum();
    let a = 1.0 + beta0;
    let squared = moments.n_u as f64 * a * a
        + 2.0 * a * moments.xu_sum.dot(beta)
        + beta.dot(&moments.xut_xu.dot(beta));
    let local = beta.dot(&forms.xt_r_x.dot(beta))
        + 2.0 * beta0 * forms.xt_r_1.dot(beta)
        + beta0 * beta0 * forms.one_r_one;
    ridge + hp.cp * hinge + hp.cu * squared + local
}

/// Raw solver output in the problem's transformed coordinates.
#[derive(Debug, Clone)]
pub struct LinearSolution {
    pub beta: Array1<f64>,
    pub beta0: f64,
    pub state: AdmmState,
    pub report: SolveReport,
}

/// Runs the ADMM loop on already-prepared data.
pub fn solve_admm(
    data: &PUDataset,
    forms: &LaplacianForms,
    hp: &Hyperparams,
    stop: &StopCriteria,
) -> Result<LinearSolution> {
    hp.validate()?;
    check_forms(data, forms)?;
    let m = data.m();
    let xp = data.features_p();
    let moments = BlockMoments::new(data);
    let mut state = AdmmState::zeros(data.n_p());
    let mut beta = Array1::zeros(m);
    let mut beta0 = 0.0;
    let mut report = SolveReport {
        final_primal_residual: state.primal_residual,
        ..SolveReport::default()
    };
    if stop.max_iter == 0 {
        return Ok(LinearSolution {
            beta,
            beta0,
            state,
            report,
        });
    }

    let (lhs, _) = state_free_blocks(data, &moments, forms, hp);
    let chol: Cholesky =
        factor_with_jitter(&lhs, m).map_err(|condition| Error::SingularSystem { condition })?;
    let c = hp.cp / hp.mu1;
    let mut rhs = vec![0.0; m + 1];
    let mut scores = Array1::<f64>::zeros(data.n_p());
    let mut h_prev = state.h.clone();

    for iter in 1..=stop.max_iter {
        let (m1, m2) = right_hand_side(xp, &moments, hp, &state);
        rhs[..m].copy_from_slice(m1.as_slice().expect("contiguous"));
        rhs[m] = m2;
        chol.solve_in_place(&mut rhs);
        beta.as_slice_mut()
            .expect("contiguous")
            .copy_from_slice(&rhs[..m]);
        beta0 = rhs[m];

        for (i, row) in xp.rows().into_iter().enumerate() {
            scores[i] = row.dot(&beta) + beta0;
        }
        let mut primal_sq = 0.0;
        for i in 0..data.n_p() {
            let h = shrink(c, 1.0 + state.u_h[i] / hp.mu1 - scores[i]);
            let r = 1.0 - scores[i] - h;
            state.h[i] = h;
            state.u_h[i] += hp.mu1 * r;
            primal_sq += r * r;
        }
        state.iteration = iter;
        state.primal_residual = primal_sq.sqrt();
        if !state.primal_residual.is_finite() {
            return Err(Error::Diverged { iteration: iter });
        }

        let dual = hp.mu1
            * state
                .h
                .iter()
                .zip(h_prev.iter())
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt();
        h_prev.assign(&state.h);

        if stop.record_trace {
            report.objective_trace.push(objective_from_moments(
                &moments, forms, hp, &beta, beta0, &scores,
            ));
        }
        report.iterations = iter;
        report.final_primal_residual = state.primal_residual;
        report.final_dual_residual = dual;
        if stop.satisfied(state.primal_residual, dual) {
            report.converged = true;
            break;
        }
    }
    Ok(LinearSolution {
        beta,
        beta0,
        state,
        report,
    })
}

/// Fits on a prepared problem, using its standardizer and cached Laplacian.
pub fn fit_problem(
    problem: &TrainingProblem,
    hp: &Hyperparams,
    stop: &StopCriteria,
) -> Result<(LinearModel, SolveReport)> {
    hp.validate()?;
    problem.check_k(hp.knn.k)?;
    let forms = problem.forms(hp.knn.sigma)?;
    let sol = solve_admm(problem.data(), &forms, hp, stop)?;
    let model = LinearModel {
        beta: sol.beta.to_vec(),
        beta0: sol.beta0,
        standardizer: problem.standardizer().clone(),
    };
    Ok((model, sol.report))
}

/// Standardizes `data`, builds the local constraint and runs ADMM.
pub fn fit(
    data: &PUDataset,
    hp: &Hyperparams,
    stop: &StopCriteria,
) -> Result<(LinearModel, SolveReport)> {
    hp.validate()?;
    hp.knn.validate(data.n())?;
    let problem = TrainingProblem::new(data, hp.knn.k, true)?;
    fit_problem(&problem, hp, stop)
}
