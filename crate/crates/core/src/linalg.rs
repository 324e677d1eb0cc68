//! Dense symmetric positive-definite solves.
//!
//! Every system this crate solves is the normal-equation matrix of a strictly
//! convex quadratic, so a Cholesky factorization is all that is needed. The
//! systems are small (m+1 for the linear solvers, m for the kernel `B`), so
//! nothing here is blocked or vectorized.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

/// Condition estimates above this are treated as singular.
pub const CONDITION_LIMIT: f64 = 1e12;

/// Relative jitter added to the leading block's diagonal on the single retry.
pub const JITTER_SCALE: f64 = 1e-10;

/// Lower-triangular Cholesky factor `A = L Lᵀ`.
#[derive(Debug, Clone)]
pub struct Cholesky {
    l: Array2<f64>,
}

impl Cholesky {
    /// Factorizes a symmetric matrix, reading only its lower triangle.
    /// Returns `None` when a pivot is not strictly positive.
    pub fn factor(a: ArrayView2<f64>) -> Option<Self> {
        let n = a.nrows();
        debug_assert_eq!(n, a.ncols());
        let mut l = Array2::<f64>::zeros((n, n));
        for j in 0..n {
            let mut d = a[[j, j]];
            for k in 0..j {
                d -= l[[j, k]] * l[[j, k]];
            }
            if !(d > 0.0) || !d.is_finite() {
                return None;
            }
            let djj = d.sqrt();
            l[[j, j]] = djj;
            for i in (j + 1)..n {
                let mut s = a[[i, j]];
                for k in 0..j {
                    s -= l[[i, k]] * l[[j, k]];
                }
                l[[i, j]] = s / djj;
            }
        }
        Some(Cholesky { l })
    }

    pub fn dim(&self) -> usize {
        self.l.nrows()
    }

    /// Squared ratio of the extreme diagonal entries of `L`; a cheap lower
    /// bound on the spectral condition number.
    pub fn condition_estimate(&self) -> f64 {
        let diag = self.l.diag();
        let max = diag.iter().cloned().fold(f64::MIN, f64::max);
        let min = diag.iter().cloned().fold(f64::MAX, f64::min);
        (max / min).powi(2)
    }

    pub fn solve(&self, b: ArrayView1<f64>) -> Array1<f64> {
        let mut x = b.to_owned();
        self.solve_in_place(x.as_slice_mut().expect("owned vector is contiguous"));
        x
    }

    pub fn solve_in_place(&self, x: &mut [f64]) {
        let n = self.dim();
        debug_assert_eq!(x.len(), n);
        for i in 0..n {
            let mut s = x[i];
            for k in 0..i {
                s -= self.l[[i, k]] * x[k];
            }
            x[i] = s / self.l[[i, i]];
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in (i + 1)..n {
                s -= self.l[[k, i]] * x[k];
            }
            x[i] = s / self.l[[i, i]];
        }
    }

    /// Solves `A X = B` column by column.
    pub fn solve_columns(&self, b: ArrayView2<f64>) -> Array2<f64> {
        let mut out = b.to_owned();
        for mut col in out.axis_iter_mut(Axis(1)) {
            let mut buf = col.to_vec();
            self.solve_in_place(&mut buf);
            col.iter_mut().zip(buf).for_each(|(c, v)| *c = v);
        }
        out
    }
}

/// Factorizes `a`; on failure or an estimate above [`CONDITION_LIMIT`], adds
/// `JITTER_SCALE · trace(A₁₁)/k` to the first `block` diagonal entries and
/// retries once. On final failure returns the last condition estimate
/// (infinite when the factorization itself broke down).
pub fn factor_with_jitter(a: &Array2<f64>, block: usize) -> Result<Cholesky, f64> {
    let accept = |c: Option<Cholesky>| match c {
        Some(c) => {
            let cond = c.condition_estimate();
            if cond <= CONDITION_LIMIT {
                Ok(c)
            } else {
                Err(cond)
            }
        }
        None => Err(f64::INFINITY),
    };
    match accept(Cholesky::factor(a.view())) {
        Ok(c) => Ok(c),
        Err(_) => {
            let block = block.min(a.nrows()).max(1);
            let trace: f64 = (0..block).map(|i| a[[i, i]]).sum();
            let eps = JITTER_SCALE * trace / block as f64;
            if !(eps > 0.0) || !eps.is_finite() {
                return Err(f64::INFINITY);
            }
            let mut jittered = a.clone();
            for i in 0..block {
                jittered[[i, i]] += eps;
            }
            accept(Cholesky::factor(jittered.view()))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn solves_small_spd_system() {
        let a = array![[4.0, -1.0], [-1.0, 3.0]];
        let c = Cholesky::factor(a.view()).unwrap();
        let x = c.solve(array![3.0, -1.0].view());
        // Cramer's rule: det = 11
        assert!((x[0] - 8.0 / 11.0).abs() < 1e-15);
        assert!((x[1] + 1.0 / 11.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_indefinite() {
        let a = array![[1.0, 2.0], [2.0, 1.0]];
        assert!(Cholesky::factor(a.view()).is_none());
    }

    #[test]
    fn jitter_rescues_semidefinite() {
        let a = array![[1.0, 1.0], [1.0, 1.0]];
        assert!(Cholesky::factor(a.view()).is_none());
        // jitter of 1e-10 leaves a condition estimate near 2e10, under the limit
        assert!(factor_with_jitter(&a, 2).is_ok());
        let z = Array2::<f64>::zeros((2, 2));
        assert!(factor_with_jitter(&z, 2).is_err());
    }

    #[test]
    fn solve_columns_matches_vector_solve() {
        let a = array![[5.0, 1.0, 0.5], [1.0, 4.0, 0.2], [0.5, 0.2, 3.0]];
        let b = array![[1.0, 0.0], [2.0, 1.0], [-1.0, 4.0]];
        let c = Cholesky::factor(a.view()).unwrap();
        let x = c.solve_columns(b.view());
        for j in 0..2 {
            let xj = c.solve(b.column(j));
            for i in 0..3 {
                assert_eq!(x[[i, j]], xj[i]);
            }
        }
        let back = a.dot(&x);
        for (u, v) in back.iter().zip(b.iter()) {
            assert!((u - v).abs() < 1e-12);
        }
    }
}
