//! Mutual-KNN similarity weights and the local-constraint (graph Laplacian)
//! matrix over the stacked training features.

use ndarray::{Array1, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest instance count for which dense `n × n` matrices are built.
pub const DENSE_LIMIT: usize = 5000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KnnParams {
    /// Neighbor count `K`.
    pub k: usize,
    /// Width `σ` in `exp(-‖xᵢ - xⱼ‖² / σ)`.
    pub sigma: f64,
}

impl KnnParams {
    pub fn new(k: usize, sigma: f64) -> Self {
        KnnParams { k, sigma }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if !(self.sigma > 0.0) || !self.sigma.is_finite() {
            return Err(Error::NonPositiveSigma(self.sigma));
        }
        if self.k == 0 {
            return Err(Error::invalid("knn", "K must be at least 1"));
        }
        if n < 2 {
            return Err(Error::TooFewInstances {
                needed: 2,
                found: n,
            });
        }
        if self.k >= n {
            return Err(Error::invalid(
                "knn",
                format!("K = {} must be below n = {n}", self.k),
            ));
        }
        Ok(())
    }
}

fn squared_distance(a: ndarray::ArrayView1<f64>, b: ndarray::ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Mutual K-nearest-neighbor pairs, independent of the width `σ`.
///
/// Neighbors exclude the point itself; distance ties go to the lower row
/// index. A pair is kept only when each point is among the other's `K`
/// nearest.
#[derive(Debug, Clone)]
pub struct KnnGraph {
    n: usize,
    /// `(i, j, ‖xᵢ - xⱼ‖²)` with `i < j`, sorted.
    edges: Vec<(usize, usize, f64)>,
}

impl KnnGraph {
    pub fn build(x: ArrayView2<f64>, k: usize) -> Result<Self> {
        let n = x.nrows();
        if n < 2 {
            return Err(Error::TooFewInstances {
                needed: 2,
                found: n,
            });
        }
        if n > DENSE_LIMIT {
            return Err(Error::TooLarge {
                found: n,
                limit: DENSE_LIMIT,
            });
        }
        if k == 0 || k >= n {
            return Err(Error::invalid(
                "knn",
                format!("K = {k} must lie in [1, n) with n = {n}"),
            ));
        }
        let mut dist = Array2::<f64>::zeros((n, n));
        for i in 0..n {
            for j in (i + 1)..n {
                let d = squared_distance(x.row(i), x.row(j));
                dist[[i, j]] = d;
                dist[[j, i]] = d;
            }
        }
        // neighbor[i][j] is true when j is among i's K nearest.
        let mut is_neighbor = vec![false; n * n];
        let mut cand: Vec<(f64, usize)> = Vec::with_capacity(n - 1);
        for i in 0..n {
            cand.clear();
            cand.extend((0..n).filter(|&j| j != i).map(|j| (dist[[i, j]], j)));
            let order =
                |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
            cand.select_nth_unstable_by(k - 1, order);
            for &(_, j) in &cand[..k] {
                is_neighbor[i * n + j] = true;
            }
        }
        let mut edges = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                if is_neighbor[i * n + j] && is_neighbor[j * n + i] {
                    edges.push((i, j, dist[[i, j]]));
                }
            }
        }
        Ok(KnnGraph { n, edges })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Mutual pairs `(i, j)` with `i < j`.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().map(|&(i, j, _)| (i, j))
    }

    pub fn weights(&self, sigma: f64) -> Result<SimilarityGraph> {
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(Error::NonPositiveSigma(sigma));
        }
        let mut w = Array2::<f64>::zeros((self.n, self.n));
        for &(i, j, d) in &self.edges {
            let v = (-d / sigma).exp();
            w[[i, j]] = v;
            w[[j, i]] = v;
        }
        Ok(SimilarityGraph { w })
    }
}

/// Symmetric similarity matrix `W` with zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityGraph {
    w: Array2<f64>,
}

impl SimilarityGraph {
    pub fn from_matrix(w: Array2<f64>) -> Result<Self> {
        let n = w.nrows();
        if w.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: w.ncols(),
            });
        }
        for i in 0..n {
            if w[[i, i]] != 0.0 {
                return Err(Error::invalid("W", "diagonal must be zero"));
            }
            for j in 0..i {
                if w[[i, j]] != w[[j, i]] || !(0.0..=1.0).contains(&w[[i, j]]) {
                    return Err(Error::invalid(
                        "W",
                        "must be symmetric with entries in [0, 1]",
                    ));
                }
            }
        }
        Ok(SimilarityGraph { w })
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.w
    }

    pub fn n(&self) -> usize {
        self.w.nrows()
    }
}

/// Builds `W` from the rows of `x`.
pub fn mutual_knn_weights(x: ArrayView2<f64>, params: &KnnParams) -> Result<SimilarityGraph> {
    params.validate(x.nrows())?;
    KnnGraph::build(x, params.k)?.weights(params.sigma)
}

/// `R = (W* - W) / n`, with `W*` the diagonal of column sums of `W`.
#[derive(Debug, Clone, PartialEq)]
pub struct LaplacianMatrix {
    r: Array2<f64>,
}

impl LaplacianMatrix {
    pub fn matrix(&self) -> &Array2<f64> {
        &self.r
    }

    pub fn n(&self) -> usize {
        self.r.nrows()
    }

    /// `R · 1`, evaluated literally.
    pub fn row_sums(&self) -> Array1<f64> {
        self.r.rows().into_iter().map(|r| r.sum()).collect()
    }

    /// Wraps an arbitrary symmetric matrix; used by callers that supply their
    /// own local constraint.
    pub fn from_matrix(r: Array2<f64>) -> Result<Self> {
        if r.nrows() != r.ncols() {
            return Err(Error::DimensionMismatch {
                expected: r.nrows(),
                found: r.ncols(),
            });
        }
        Ok(LaplacianMatrix { r })
    }

    pub fn zeros(n: usize) -> Self {
        LaplacianMatrix {
            r: Array2::zeros((n, n)),
        }
    }
}

pub fn laplacian(graph: &SimilarityGraph) -> LaplacianMatrix {
    let w = graph.matrix();
    let n = w.nrows();
    let mut r = w.mapv(|v| -v);
    for i in 0..n {
        let col_sum: f64 = w.column(i).sum();
        r[[i, i]] += col_sum;
    }
    r /= n as f64;
    LaplacianMatrix { r }
}

/// The quadratic forms of `R` against the stacked features that the solvers
/// need: `XᵀRX`, `XᵀR1`, `R1` and `1ᵀR1`.
#[derive(Debug, Clone)]
pub struct LaplacianForms {
    pub xt_r_x: Array2<f64>,
    pub xt_r_1: Array1<f64>,
    pub r_1: Array1<f64>,
    pub one_r_one: f64,
}

impl LaplacianForms {
    pub fn new(r: &LaplacianMatrix, x_pu: ArrayView2<f64>) -> Result<Self> {
        if r.n() != x_pu.nrows() {
            return Err(Error::DimensionMismatch {
                expected: x_pu.nrows(),
                found: r.n(),
            });
        }
        let rx = r.matrix().dot(&x_pu);
        let xt_r_x = x_pu.t().dot(&rx);
        // R is symmetric, so XᵀR1 = (RX)ᵀ1.
        let xt_r_1: Array1<f64> = rx.columns().into_iter().map(|c| c.sum()).collect();
        let r_1 = r.row_sums();
        let one_r_one = r_1.sum();
        Ok(LaplacianForms {
            xt_r_x,
            xt_r_1,
            r_1,
            one_r_one,
        })
    }

    /// Forms of the zero matrix, i.e. no local constraint.
    pub fn zeros(n: usize, m: usize) -> Self {
        LaplacianForms {
            xt_r_x: Array2::zeros((m, m)),
            xt_r_1: Array1::zeros(m),
            r_1: Array1::zeros(n),
            one_r_one: 0.0,
        }
    }

    pub fn n(&self) -> usize {
        self.r_1.len()
    }

    pub fn m(&self) -> usize {
        self.xt_r_1.len()
    }
}
