//! Training data prepared once and shared by every fit on it.
//!
//! Cross-validation fits thousands of candidates on the same fold. The KNN
//! structure depends only on the features and `K`, and the Laplacian forms
//! only on `σ`, so both are computed once and cached here.

use std::sync::{Arc, Mutex};

use ndarray::{Array1, Array2, ArrayView2};

use crate::dataset::{PUDataset, Standardizer};
use crate::error::{Error, Result};
use crate::similarity::{laplacian, KnnGraph, LaplacianForms, LaplacianMatrix};

#[derive(Debug)]
pub struct TrainingProblem {
    data: PUDataset,
    standardizer: Standardizer,
    x_pu: Array2<f64>,
    k: usize,
    graph: KnnGraph,
    forms: Mutex<Vec<(u64, Arc<LaplacianForms>)>>,
}

impl TrainingProblem {
    /// Standardizes (when asked) on `X_pu` and builds the mutual-KNN graph.
    pub fn new(data: &PUDataset, k: usize, standardize: bool) -> Result<Self> {
        let standardizer = if standardize {
            Standardizer::fit_pu(data)?
        } else {
            Standardizer::identity(data.m())
        };
        let data = standardizer.apply_pu(data)?;
        let x_pu = data.stacked();
        let graph = KnnGraph::build(x_pu.view(), k)?;
        Ok(TrainingProblem {
            data,
            standardizer,
            x_pu,
            k,
            graph,
            forms: Mutex::new(Vec::new()),
        })
    }

    /// Data in the transformed space the solvers work in.
    pub fn data(&self) -> &PUDataset {
        &self.data
    }

    pub fn standardizer(&self) -> &Standardizer {
        &self.standardizer
    }

    pub fn x_pu(&self) -> ArrayView2<'_, f64> {
        self.x_pu.view()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn graph(&self) -> &KnnGraph {
        &self.graph
    }

    pub fn laplacian(&self, sigma: f64) -> Result<LaplacianMatrix> {
        Ok(laplacian(&self.graph.weights(sigma)?))
    }

    pub fn forms(&self, sigma: f64) -> Result<Arc<LaplacianForms>> {
        let key = sigma.to_bits();
        if let Some((_, f)) = self.forms.lock().unwrap().iter().find(|(k, _)| *k == key) {
            return Ok(Arc::clone(f));
        }
        let forms = Arc::new(LaplacianForms::new(
            &self.laplacian(sigma)?,
            self.x_pu.view(),
        )?);
        let mut cache = self.forms.lock().unwrap();
        if !cache.iter().any(|(k, _)| *k == key) {
            cache.push((key, Arc::clone(&forms)));
        }
        Ok(forms)
    }

    pub(crate) fn check_k(&self, k: usize) -> Result<()> {
        if k != self.k {
            return Err(Error::invalid(
                "knn",
                format!(
                    "problem was prepared with K = {}, hyperparameters ask for {k}",
                    self.k
                ),
            ));
        }
        Ok(())
    }
}

/// Summary statistics of the two feature blocks reused across ADMM iterations.
#[derive(Debug, Clone)]
pub(crate) struct BlockMoments {
    pub xpt_xp: Array2<f64>,
    pub xut_xu: Array2<f64>,
    pub xp_sum: Array1<f64>,
    pub xu_sum: Array1<f64>,
    pub n_u: usize,
}

impl BlockMoments {
    pub fn new(data: &PUDataset) -> Self {
        let xp = data.features_p();
        let xu = data.features_u();
        BlockMoments {
            xpt_xp: xp.t().dot(&xp),
            xut_xu: xu.t().dot(&xu),
            xp_sum: xp.sum_axis(ndarray::Axis(0)),
            xu_sum: xu.sum_axis(ndarray::Axis(0)),
            n_u: xu.nrows(),
        }
    }
}
