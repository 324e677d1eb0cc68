//! The GLLC baseline: squared loss on the labeled positives as well as on
//! the unlabeled set, plus the same ridge and local-constraint terms as
//! PUAL. The objective is a convex quadratic, so both variants are a single
//! linear solve.

use ndarray::{s, Array1, Array2, ArrayView2};

use crate::dataset::{PUDataset, Standardizer};
use crate::error::{Error, Result};
use crate::linalg::factor_with_jitter;
use crate::model::Prediction;
use crate::problem::{BlockMoments, TrainingProblem};
use crate::pual_kernel::{schur_complement, training_grams, GramBlocks, KernelModel, KernelSpec};
use crate::pual_linear::{Hyperparams, LinearModel};
use crate::similarity::{LaplacianForms, LaplacianMatrix};

#[derive(Debug, Clone, PartialEq)]
pub enum GllcModel {
    Linear(LinearModel),
    Kernel(KernelModel),
}

impl GllcModel {
    pub fn beta0(&self) -> f64 {
        match self {
            GllcModel::Linear(m) => m.beta0,
            GllcModel::Kernel(m) => m.beta0,
        }
    }

    pub fn standardizer(&self) -> &Standardizer {
        match self {
            GllcModel::Linear(m) => &m.standardizer,
            GllcModel::Kernel(m) => &m.standardizer,
        }
    }

    pub fn predict(&self, features: ArrayView2<f64>) -> Result<Prediction> {
        match self {
            GllcModel::Linear(m) => m.predict(features),
            GllcModel::Kernel(m) => m.predict(features),
        }
    }
}

/// Normal equations of the GLLC objective in `(β, β₀)`:
/// `[G11 G12; G12ᵀ G22] [β; β₀] = [g1; g2]`.
#[derive(Debug, Clone)]
pub struct GllcSystem {
    pub g11: Array2<f64>,
    pub g12: Array1<f64>,
    pub g22: f64,
    pub g1: Array1<f64>,
    pub g2: f64,
}

impl GllcSystem {
    pub fn assemble(data: &PUDataset, forms: &LaplacianForms, hp: &Hyperparams) -> Result<Self> {
        if forms.n() != data.n() || forms.m() != data.m() {
            return Err(Error::DimensionMismatch {
                expected: data.n(),
                found: forms.n(),
            });
        }
        Ok(Self::from_moments(
            &BlockMoments::new(data),
            data.n_p(),
            forms,
            hp,
        ))
    }

    pub(crate) fn from_moments(
        mo: &BlockMoments,
        n_p: usize,
        forms: &LaplacianForms,
        hp: &Hyperparams,
    ) -> Self {
        let (n_p, n_u) = (n_p as f64, mo.n_u as f64);
        let m = mo.xp_sum.len();
        let g11 = Array2::<f64>::eye(m) * hp.lambda
            + &mo.xpt_xp * (2.0 * hp.cp)
            + &mo.xut_xu * (2.0 * hp.cu)
            + &forms.xt_r_x * 2.0;
        let g12 = &mo.xp_sum * (2.0 * hp.cp) + &mo.xu_sum * (2.0 * hp.cu) + &forms.xt_r_1 * 2.0;
        let g22 = 2.0 * hp.cp * n_p + 2.0 * hp.cu * n_u + 2.0 * forms.one_r_one;
        let g1 = &mo.xp_sum * (2.0 * hp.cp) - &mo.xu_sum * (2.0 * hp.cu);
        let g2 = 2.0 * hp.cp * n_p - 2.0 * hp.cu * n_u;
        GllcSystem {
            g11,
            g12,
            g22,
            g1,
            g2,
        }
    }

    pub fn solve(&self) -> Result<(Array1<f64>, f64)> {
        let m = self.g12.len();
        let mut a = Array2::zeros((m + 1, m + 1));
        a.slice_mut(s![..m, ..m]).assign(&self.g11);
        a.slice_mut(s![..m, m]).assign(&self.g12);
        a.slice_mut(s![m, ..m]).assign(&self.g12);
        a[[m, m]] = self.g22;
        let mut rhs = self.g1.to_vec();
        rhs.push(self.g2);
        let chol =
            factor_with_jitter(&a, m).map_err(|condition| Error::SingularSystem { condition })?;
        chol.solve_in_place(&mut rhs);
        let beta0 = rhs.pop().expect("m + 1 entries");
        Ok((Array1::from(rhs), beta0))
    }

    /// `B = G11 - G12 G12ᵀ / G22`.
    pub fn b_matrix(&self) -> Result<Array2<f64>> {
        if self.g22 == 0.0 {
            return Err(Error::DegenerateM22);
        }
        Ok(schur_complement(&self.g11, &self.g12, self.g22))
    }
}

/// The GLLC objective evaluated term by term.
pub fn gllc_objective(
    data: &PUDataset,
    r: &LaplacianMatrix,
    hp: &Hyperparams,
    beta: &Array1<f64>,
    beta0: f64,
) -> Result<f64> {
    if beta.len() != data.m() {
        return Err(Error::DimensionMismatch {
            expected: data.m(),
            found: beta.len(),
        });
    }
    if r.n() != data.n() {
        return Err(Error::DimensionMismatch {
            expected: data.n(),
            found: r.n(),
        });
    }
    let fp = data.features_p().dot(beta) + beta0;
    let fu = data.features_u().dot(beta) + beta0;
    let f = data.stacked().dot(beta) + beta0;
    let ridge = 0.5 * hp.lambda * beta.dot(beta);
    let pos: f64 = fp.iter().map(|v| (1.0 - v).powi(2)).sum();
    let unl: f64 = fu.iter().map(|v| (1.0 + v).powi(2)).sum();
    Ok(ridge + hp.cp * pos + hp.cu * unl + f.dot(&r.matrix().dot(&f)))
}

pub fn fit_gllc_linear_problem(problem: &TrainingProblem, hp: &Hyperparams) -> Result<GllcModel> {
    hp.validate()?;
    problem.check_k(hp.knn.k)?;
    let forms = problem.forms(hp.knn.sigma)?;
    let (beta, beta0) = GllcSystem::assemble(problem.data(), &forms, hp)?.solve()?;
    Ok(GllcModel::Linear(LinearModel {
        beta: beta.to_vec(),
        beta0,
        standardizer: problem.standardizer().clone(),
    }))
}

pub fn fit_gllc_linear(data: &PUDataset, hp: &Hyperparams) -> Result<GllcModel> {
    hp.validate()?;
    hp.knn.validate(data.n())?;
    let problem = TrainingProblem::new(data, hp.knn.k, true)?;
    fit_gllc_linear_problem(&problem, hp)
}

/// `(Ω, β₀)` for a Gram over the training rows.
///
/// Same elimination as the PUAL kernel path: with `c = g2/G22`,
/// `Ω = [2C_p·1; -2C_u·1] - c([2C_p·1; 2C_u·1] + 2R1)` and
/// `β₀ = c - (2C_p 1ᵀΦ_pΩ + 2C_u 1ᵀΦ_uΩ + 2(R1)ᵀΦΩ) / G22`.
pub fn solve_gllc_kernel(
    grams: &GramBlocks,
    forms: &LaplacianForms,
    hp: &Hyperparams,
) -> Result<(Array1<f64>, f64)> {
    let (n, n_p) = (grams.n(), grams.n_p());
    if forms.n() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: forms.n(),
        });
    }
    let n_u = n - n_p;
    let g22 = 2.0 * hp.cp * n_p as f64 + 2.0 * hp.cu * n_u as f64 + 2.0 * forms.one_r_one;
    if g22 == 0.0 {
        return Err(Error::DegenerateM22);
    }
    let g2 = 2.0 * hp.cp * n_p as f64 - 2.0 * hp.cu * n_u as f64;
    let c = g2 / g22;
    let mut omega = Array1::zeros(n);
    omega.slice_mut(s![..n_p]).fill(2.0 * hp.cp * (1.0 - c));
    omega.slice_mut(s![n_p..]).fill(-2.0 * hp.cu * (1.0 + c));
    omega.scaled_add(-2.0 * c, &forms.r_1);
    let phi_omega = grams.phi_pu().dot(&omega);
    let q = 2.0 * hp.cp * phi_omega.slice(s![..n_p]).sum()
        + 2.0 * hp.cu * phi_omega.slice(s![n_p..]).sum()
        + 2.0 * forms.r_1.dot(&phi_omega);
    let beta0 = c - q / g22;
    if !beta0.is_finite() || omega.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularSystem {
            condition: f64::INFINITY,
        });
    }
    Ok((omega, beta0))
}

fn gllc_b(data: &PUDataset, forms: &LaplacianForms, hp: &Hyperparams) -> Result<Array2<f64>> {
    GllcSystem::assemble(data, forms, hp)?.b_matrix()
}

pub fn fit_gllc_kernel_problem(
    problem: &TrainingProblem,
    hp: &Hyperparams,
    kernel: &KernelSpec,
) -> Result<GllcModel> {
    hp.validate()?;
    problem.check_k(hp.knn.k)?;
    let forms = problem.forms(hp.knn.sigma)?;
    let (grams, b) = training_grams(problem, kernel, gllc_b)?;
    let (omega, beta0) = solve_gllc_kernel(&grams, &forms, hp)?;
    Ok(GllcModel::Kernel(KernelModel {
        omega: omega.to_vec(),
        beta0,
        train_features: problem.x_pu().to_owned(),
        kernel: *kernel,
        b_matrix: b,
        standardizer: problem.standardizer().clone(),
    }))
}

pub fn fit_gllc_kernel(
    data: &PUDataset,
    hp: &Hyperparams,
    kernel: &KernelSpec,
) -> Result<GllcModel> {
    hp.validate()?;
    hp.knn.validate(data.n())?;
    let problem = TrainingProblem::new(data, hp.knn.k, true)?;
    fit_gllc_kernel_problem(&problem, hp, kernel)
}

/// GLLC with a user-supplied Gram over the training rows (positives first).
pub fn fit_gllc_kernel_with_gram(
    data: &PUDataset,
    gram: Array2<f64>,
    hp: &Hyperparams,
) -> Result<GllcModel> {
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
    let (omega, beta0) = solve_gllc_kernel(&GramBlocks::new(gram, data.n_p())?, &forms, hp)?;
    Ok(GllcModel::Kernel(KernelModel {
        omega: omega.to_vec(),
        beta0,
        train_features: problem.x_pu().to_owned(),
        kernel: KernelSpec::Precomputed,
        b_matrix: None,
        standardizer: problem.standardizer().clone(),
    }))
}
