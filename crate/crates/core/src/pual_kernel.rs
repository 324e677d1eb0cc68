//! PUAL with a non-linear decision boundary.
//!
//! Eliminating `β₀` from the `(β, β₀)` normal equations leaves
//! `B β = φ(X_pu)ᵀ Ω`, with `B = M11 - M12 M21 / M22` and a vector `Ω` that
//! depends only on `h`, `u_h` and scalars. Replacing `φ(X_k) B⁻¹ φ(X_pu)ᵀ` by
//! a Gram matrix `Φ(X_k, X_pu)` gives an ADMM whose iterates never touch
//! features: `Ω` in closed form, then `β₀`, then `h` and `u_h`. Scores are
//! `Φ(x, X_pu) Ω + β₀`.
//!
//! With the `linear-via-B` Gram (`Φ = X B⁻¹ X_puᵀ`) the iterates coincide with
//! the linear solver's, which is what the equivalence tests check.

use ndarray::{s, Array1, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::dataset::{PUDataset, Standardizer};
use crate::error::{Error, Result};
use crate::linalg::{factor_with_jitter, Cholesky};
use crate::model::{Prediction, SolveReport, StopCriteria};
use crate::problem::TrainingProblem;
use crate::pual_linear::{self, shrink, AdmmState, Hyperparams};
use crate::similarity::{LaplacianForms, LaplacianMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum KernelSpec {
    /// `exp(-‖x - z‖² / (2 width²))`.
    Rbf { width: f64 },
    /// `Φ = X B⁻¹ X_puᵀ` with `B` assembled from these hyperparameters.
    LinearViaB { b_params: Hyperparams },
    /// A user-supplied Gram over the training rows.
    Precomputed,
}

impl KernelSpec {
    pub fn name(&self) -> &'static str {
        match self {
            KernelSpec::Rbf { .. } => "rbf",
            KernelSpec::LinearViaB { .. } => "linear-via-b",
            KernelSpec::Precomputed => "precomputed",
        }
    }
}

/// `Φ(X_pu, X_pu)` with its labeled-positive and unlabeled row blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct GramBlocks {
    phi_pu: Array2<f64>,
    n_p: usize,
}

impl GramBlocks {
    pub fn new(phi_pu: Array2<f64>, n_p: usize) -> Result<Self> {
        let n = phi_pu.nrows();
        if phi_pu.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: phi_pu.ncols(),
            });
        }
        if n_p == 0 || n_p >= n {
            return Err(Error::invalid(
                "gram",
                format!("n_p = {n_p} must lie in [1, {n})"),
            ));
        }
        if phi_pu.iter().any(|v| !v.is_finite()) {
            return Err(Error::Malformed("non-finite Gram entry".into()));
        }
        Ok(GramBlocks { phi_pu, n_p })
    }

    /// `Φ(X_p, X_pu)`.
    pub fn phi_p(&self) -> ArrayView2<'_, f64> {
        self.phi_pu.slice(s![..self.n_p, ..])
    }

    /// `Φ(X_u, X_pu)`.
    pub fn phi_u(&self) -> ArrayView2<'_, f64> {
        self.phi_pu.slice(s![self.n_p.., ..])
    }

    pub fn phi_pu(&self) -> ArrayView2<'_, f64> {
        self.phi_pu.view()
    }

    pub fn n_p(&self) -> usize {
        self.n_p
    }

    pub fn n(&self) -> usize {
        self.phi_pu.nrows()
    }
}

pub fn gram_rbf(a: ArrayView2<f64>, b: ArrayView2<f64>, width: f64) -> Result<Array2<f64>> {
    if !(width > 0.0) || !width.is_finite() {
        return Err(Error::NonPositiveWidth(width));
    }
    if a.ncols() != b.ncols() {
        return Err(Error::DimensionMismatch {
            expected: a.ncols(),
            found: b.ncols(),
        });
    }
    let scale = 1.0 / (2.0 * width * width);
    let mut out = Array2::zeros((a.nrows(), b.nrows()));
    for (i, ra) in a.rows().into_iter().enumerate() {
        for (j, rb) in b.rows().into_iter().enumerate() {
            let d: f64 = ra
                .iter()
                .zip(rb.iter())
                .map(|(x, y)| (x - y) * (x - y))
                .sum();
            out[[i, j]] = (-d * scale).exp();
        }
    }
    Ok(out)
}

/// `B = M11 - M12 M21 / M22` for the PUAL system (it does not depend on the
/// ADMM state).
pub fn b_matrix(data: &PUDataset, forms: &LaplacianForms, hp: &Hyperparams) -> Result<Array2<f64>> {
    let state = AdmmState::zeros(data.n_p());
    let sys = pual_linear::BetaSystem::assemble(data, forms, hp, &state)?;
    Ok(schur_complement(&sys.m11, &sys.m12, sys.m22))
}

pub(crate) fn schur_complement(m11: &Array2<f64>, m12: &Array1<f64>, m22: f64) -> Array2<f64> {
    let m = m12.len();
    let mut b = m11.clone();
    for i in 0..m {
        for j in 0..m {
            b[[i, j]] -= m12[i] * m12[j] / m22;
        }
    }
    b
}

/// Factorizes `B`, enforcing `n_p > m` and `n_u > m`.
pub(crate) fn factor_b(b: &Array2<f64>, n_p: usize, n_u: usize) -> Result<Cholesky> {
    let m = b.nrows();
    if n_p <= m || n_u <= m {
        return Err(Error::InsufficientRank { n_p, n_u, m });
    }
    factor_with_jitter(b, m).map_err(|condition| Error::SingularB { condition })
}

/// `X_k B⁻¹ X_puᵀ` for the rows of `x`, through the factor of `B`.
pub(crate) fn linear_gram(
    chol: &Cholesky,
    x: ArrayView2<f64>,
    x_pu: ArrayView2<f64>,
) -> Array2<f64> {
    let b_inv_xt = chol.solve_columns(x_pu.t());
    x.dot(&b_inv_xt)
}

/// The linear-via-B Gram blocks over the training rows, against a dense `R`.
pub fn gram_linear_via_b(
    data: &PUDataset,
    hp: &Hyperparams,
    r: &LaplacianMatrix,
) -> Result<GramBlocks> {
    let x_pu = data.stacked();
    let forms = LaplacianForms::new(r, x_pu.view())?;
    let b = b_matrix(data, &forms, hp)?;
    let chol = factor_b(&b, data.n_p(), data.n_u())?;
    GramBlocks::new(linear_gram(&chol, x_pu.view(), x_pu.view()), data.n_p())
}

/// Scalars of the `β₀` row that the kernel updates need.
#[derive(Debug, Clone, Copy)]
struct Scalars {
    m22: f64,
    m2: f64,
}

fn scalars(
    n_p: usize,
    n_u: usize,
    forms: &LaplacianForms,
    hp: &Hyperparams,
    state: &AdmmState,
) -> Result<Scalars> {
    let m22 = 2.0 * hp.cu * n_u as f64 + 2.0 * forms.one_r_one + hp.mu1 * n_p as f64;
    if m22 == 0.0 {
        return Err(Error::DegenerateM22);
    }
    let m2 = -2.0 * hp.cu * n_u as f64
        + state.u_h.sum()
        + hp.mu1 * state.h.iter().map(|h| 1.0 - h).sum::<f64>();
    Ok(Scalars { m22, m2 })
}

fn check_shapes(n_p: usize, n: usize, forms: &LaplacianForms, state: &AdmmState) -> Result<()> {
    if forms.n() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: forms.n(),
        });
    }
    for len in [state.h.len(), state.u_h.len()] {
        if len != n_p {
            return Err(Error::DimensionMismatch {
                expected: n_p,
                found: len,
            });
        }
    }
    Ok(())
}

fn omega_from_state(
    n_p: usize,
    n_u: usize,
    forms: &LaplacianForms,
    hp: &Hyperparams,
    state: &AdmmState,
    sc: Scalars,
) -> Array1<f64> {
    let ratio = sc.m2 / sc.m22;
    let mut omega = Array1::zeros(n_p + n_u);
    for i in 0..n_p {
        omega[i] = state.u_h[i] - hp.mu1 * ratio + hp.mu1 * (1.0 - state.h[i]);
    }
    let unl = -2.0 * hp.cu - 2.0 * ratio * hp.cu;
    omega.slice_mut(s![n_p..]).fill(unl);
    // The correction vanishes for a true Laplacian (R·1 = 0) but is kept as written.
    omega.scaled_add(-2.0 * ratio, &forms.r_1);
    omega
}

/// The closed-form `Ω` for the current `h`, `u_h`.
pub fn update_omega(
    data: &PUDataset,
    r: &LaplacianMatrix,
    hp: &Hyperparams,
    state: &AdmmState,
) -> Result<Array1<f64>> {
    let forms = LaplacianForms::new(r, data.stacked().view())?;
    check_shapes(data.n_p(), data.n(), &forms, state)?;
    let sc = scalars(data.n_p(), data.n_u(), &forms, hp, state)?;
    Ok(omega_from_state(
        data.n_p(),
        data.n_u(),
        &forms,
        hp,
        state,
        sc,
    ))
}

fn beta0_from_products(
    phi_omega: &Array1<f64>,
    n_p: usize,
    forms: &LaplacianForms,
    hp: &Hyperparams,
    sc: Scalars,
) -> f64 {
    let p_sum: f64 = phi_omega.slice(s![..n_p]).sum();
    let u_sum: f64 = phi_omega.slice(s![n_p..]).sum();
    let q_b = 2.0 * hp.cu * u_sum + 2.0 * forms.r_1.dot(phi_omega) + hp.mu1 * p_sum;
    sc.m2 / sc.m22 - q_b / sc.m22
}

/// `β₀ = m₂/M₂₂ - Q_b/M₂₂` with
/// `Q_b = 2C_u 1ᵀΦ_uΩ + 2·1ᵀRΦ_puΩ + μ₁ 1ᵀΦ_pΩ`.
pub fn update_beta0_kernel(
    grams: &GramBlocks,
    forms: &LaplacianForms,
    hp: &Hyperparams,
    state: &AdmmState,
    omega: &Array1<f64>,
) -> Result<f64> {
    check_shapes(grams.n_p(), grams.n(), forms, state)?;
    if omega.len() != grams.n() {
        return Err(Error::DimensionMismatch {
            expected: grams.n(),
            found: omega.len(),
        });
    }
    let sc = scalars(grams.n_p(), grams.n() - grams.n_p(), forms, hp, state)?;
    let phi_omega = grams.phi_pu().dot(omega);
    Ok(beta0_from_products(&phi_omega, grams.n_p(), forms, hp, sc))
}

/// The soft-threshold step on `h` followed by the dual step on `u_h`.
pub fn update_h_dual_kernel(
    grams: &GramBlocks,
    hp: &Hyperparams,
    state: &AdmmState,
    omega: &Array1<f64>,
    beta0: f64,
) -> Result<(Array1<f64>, Array1<f64>)> {
    if omega.len() != grams.n() {
        return Err(Error::DimensionMismatch {
            expected: grams.n(),
            found: omega.len(),
        });
    }
    let scores = grams.phi_p().dot(omega) + beta0;
    let h = pual_linear::h_from_scores(&scores, hp, &state.u_h);
    let u = state
        .u_h
        .iter()
        .zip(scores.iter().zip(h.iter()))
        .map(|(u, (f, h))| u + hp.mu1 * (1.0 - f - h))
        .collect();
    Ok((h, u))
}

/// A trained kernel scorer. `train_features` are the standardized `X_pu`.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelModel {
    pub omega: Vec<f64>,
    pub beta0: f64,
    pub train_features: Array2<f64>,
    pub kernel: KernelSpec,
    /// `B` of the linear-via-B kernel; needed to score new points.
    pub b_matrix: Option<Array2<f64>>,
    pub standardizer: Standardizer,
}

impl KernelModel {
    pub fn dim(&self) -> usize {
        self.train_features.ncols()
    }

    /// `Φ(x, X_pu)` for standardized rows `x`.
    pub fn cross_gram(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        match self.kernel {
            KernelSpec::Rbf { width } => gram_rbf(x, self.train_features.view(), width),
            KernelSpec::LinearViaB { .. } => {
                let b = self.b_matrix.as_ref().ok_or_else(|| {
                    Error::Malformed("linear-via-B model lacks its B matrix".into())
                })?;
                let chol = factor_with_jitter(b, b.nrows())
                    .map_err(|condition| Error::SingularB { condition })?;
                Ok(linear_gram(&chol, x, self.train_features.view()))
            }
            KernelSpec::Precomputed => Err(Error::UnsupportedForPrecomputed),
        }
    }

    pub fn predict(&self, features: ArrayView2<f64>) -> Result<Prediction> {
        if matches!(self.kernel, KernelSpec::Precomputed) {
            return Err(Error::UnsupportedForPrecomputed);
        }
        if features.ncols() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: features.ncols(),
            });
        }
        let x = self.standardizer.apply(features)?;
        Ok(Prediction::from_scores(self.scores_transformed(x.view())?))
    }

    pub(crate) fn scores_transformed(&self, x: ArrayView2<f64>) -> Result<Vec<f64>> {
        let omega = Array1::from(self.omega.clone());
        let phi = self.cross_gram(x)?;
        Ok((phi.dot(&omega) + self.beta0).to_vec())
    }
}

pub fn predict_kernel(model: &KernelModel, features: ArrayView2<f64>) -> Result<Prediction> {
    model.predict(features)
}

/// Output of the kernel ADMM in the problem's coordinates.
#[derive(Debug, Clone)]
pub struct KernelSolution {
    pub omega: Array1<f64>,
    pub beta0: f64,
    pub state: AdmmState,
    pub report: SolveReport,
}

/// Runs the kernel ADMM for a given Gram.
pub fn solve_admm_kernel(
    grams: &GramBlocks,
    forms: &LaplacianForms,
    hp: &Hyperparams,
    stop: &StopCriteria,
) -> Result<KernelSolution> {
    let (n, n_p) = (grams.n(), grams.n_p());
    let n_u = n - n_p;
    let mut state = AdmmState::zeros(n_p);
    check_shapes(n_p, n, forms, &state)?;
    let mut omega = Array1::zeros(n);
    let mut beta0 = 0.0;
    let mut report = SolveReport {
        final_primal_residual: state.primal_residual,
        ..SolveReport::default()
    };
    let c = hp.cp / hp.mu1;
    let phi = grams.phi_pu();
    let mut phi_omega = Array1::<f64>::zeros(n);
    for iter in 1..=stop.max_iter {
        let sc = scalars(n_p, n_u, forms, hp, &state)?;
        omega = omega_from_state(n_p, n_u, forms, hp, &state, sc);
        ndarray::linalg::general_mat_vec_mul(1.0, &phi, &omega, 0.0, &mut phi_omega);
        beta0 = beta0_from_products(&phi_omega, n_p, forms, hp, sc);

        let mut primal_sq = 0.0;
        let mut dh_sq = 0.0;
        for i in 0..n_p {
            let f = phi_omega[i] + beta0;
            let h = shrink(c, 1.0 + state.u_h[i] / hp.mu1 - f);
            let r = 1.0 - f - h;
            dh_sq += (h - state.h[i]).powi(2);
            state.h[i] = h;
            state.u_h[i] += hp.mu1 * r;
            primal_sq += r * r;
        }
        state.iteration = iter;
        state.primal_residual = primal_sq.sqrt();
        if !state.primal_residual.is_finite() {
            return Err(Error::Diverged { iteration: iter });
        }
        if stop.record_trace {
            report.objective_trace.push(state.primal_residual);
        }
        report.iterations = iter;
        report.final_primal_residual = state.primal_residual;
        report.final_dual_residual = hp.mu1 * dh_sq.sqrt();
        if stop.satisfied(state.primal_residual, report.final_dual_residual) {
            report.converged = true;
            break;
        }
    }
    Ok(KernelSolution {
        omega,
        beta0,
        state,
        report,
    })
}

/// The Gram blocks a kernel spec induces on a prepared problem, plus `B`
/// for the linear-via-B kernel.
pub(crate) fn training_grams(
    problem: &TrainingProblem,
    kernel: &KernelSpec,
    b_of: impl Fn(&PUDataset, &LaplacianForms, &Hyperparams) -> Result<Array2<f64>>,
) -> Result<(GramBlocks, Option<Array2<f64>>)> {
    let data = problem.data();
    match kernel {
        KernelSpec::Rbf { width } => {
            let phi = gram_rbf(problem.x_pu(), problem.x_pu(), *width)?;
            Ok((GramBlocks::new(phi, data.n_p())?, None))
        }
        KernelSpec::LinearViaB { b_params } => {
            b_params.validate()?;
            problem.check_k(b_params.knn.k)?;
            let forms = problem.forms(b_params.knn.sigma)?;
            let b = b_of(data, &forms, b_params)?;
            let chol = factor_b(&b, data.n_p(), data.n_u())?;
            let phi = linear_gram(&chol, problem.x_pu(), problem.x_pu());
            Ok((GramBlocks::new(phi, data.n_p())?, Some(b)))
        }
        KernelSpec::Precomputed => Err(Error::invalid(
            "kernel",
            "precomputed kernels are fitted through fit_kernel_with_gram",
        )),
    }
}

pub fn fit_kernel_problem(
    problem: &TrainingProblem,
    hp: &Hyperparams,
    kernel: &KernelSpec,
    stop: &StopCriteria,
) -> Result<(KernelModel, SolveReport)> {
    hp.validate()?;
    problem.check_k(hp.knn.k)?;
    let forms = problem.forms(hp.knn.sigma)?;
    let (grams, b) = training_grams(problem, kernel, b_matrix)?;
    let sol = solve_admm_kernel(&grams, &forms, hp, stop)?;
    let model = KernelModel {
        omega: sol.omega.to_vec(),
        beta0: sol.beta0,
        train_features: problem.x_pu().to_owned(),
        kernel: *kernel,
        b_matrix: b,
        standardizer: problem.standardizer().clone(),
    };
    Ok((model, sol.report))
}

/// Algorithm for a computable kernel: standardize, build `R`, iterate.
pub fn fit_kernel(
    data: &PUDataset,
    hp: &Hyperparams,
    kernel: &KernelSpec,
    stop: &StopCriteria,
) -> Result<(KernelModel, SolveReport)> {
    hp.validate()?;
    hp.knn.validate(data.n())?;
    let problem = TrainingProblem::new(data, hp.knn.k, true)?;
    fit_kernel_problem(&problem, hp, kernel, stop)
}

/// Fits with a user-supplied square Gram over the training rows (positives
/// first). The Laplacian is still built from the features.
pub fn fit_kernel_with_gram(
    data: &PUDataset,
    gram: Array2<f64>,
    hp: &Hyperparams,
    stop: &StopCriteria,
) -> Result<(KernelModel, SolveReport)> {
    hp.validate()?;
    hp.knn.validate(data.n())?;
    if gram.nrows() != data.n() {
        return Err(Error::DimensionMismatch {
            expected: data.n(),
            found: gram.nrows(),
        });
    }
    let problem = TrainingProblem::new(data, hp.knn.k, true)?;
    let forms = problem.forms(hp.knn.sigma)?;
    let grams = GramBlocks::new(gram, data.n_p())?;
    let sol = solve_admm_kernel(&grams, &forms, hp, stop)?;
    let model = KernelModel {
        omega: sol.omega.to_vec(),
        beta0: sol.beta0,
        train_features: problem.x_pu().to_owned(),
        kernel: KernelSpec::Precomputed,
        b_matrix: None,
        standardizer: problem.standardizer().clone(),
    };
    Ok((model, sol.report))
}

/// Reads a headerless square CSV of reals.
pub fn read_gram_csv(reader: impl std::io::Read) -> Result<Array2<f64>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Malformed(e.to_string()))?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        let row = rec
            .iter()
            .enumerate()
            .map(|(j, t)| match t.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(Error::NonNumericFeature {
                    line,
                    column: format!("{}", j + 1),
                    token: t.to_string(),
                }),
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    let n = rows.len();
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    for (i, r) in rows.iter().enumerate() {
        if r.len() != n {
            return Err(Error::RaggedRow {
                line: i + 1,
                expected: n,
                found: r.len(),
            });
        }
    }
    Ok(Array2::from_shape_vec((n, n), rows.into_iter().flatten().collect()).expect("square"))
}
