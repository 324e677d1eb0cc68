mod common;

use nalgebra::DMatrix;
use ndarray::Array2;
use proptest::prelude::*;
use pual_core::similarity::{laplacian, mutual_knn_weights, KnnGraph, KnnParams};

fn points() -> impl Strategy<Value = Array2<f64>> {
    (4usize..30, 1usize..4).prop_flat_map(|(n, m)| {
        proptest::collection::vec(-5.0f64..5.0, n * m)
            .prop_map(move |v| Array2::from_shape_vec((n, m), v).unwrap())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn laplacian_is_symmetric_psd_with_zero_row_sums(x in points(), k in 1usize..4, sigma in 0.1f64..10.0) {
        let n = x.nrows();
        let r = laplacian(&mutual_knn_weights(x.view(), &KnnParams::new(k.min(n - 1), sigma)).unwrap());
        let r = r.matrix();
        for i in 0..n {
            for j in 0..n {
                prop_assert_eq!(r[[i, j]], r[[j, i]]);
            }
            prop_assert!(r.row(i).sum().abs() <= 1e-12 * n as f64);
        }
        let dense = DMatrix::from_fn(n, n, |i, j| r[[i, j]]);
        let min = dense.symmetric_eigen().eigenvalues.min();
        prop_assert!(min >= -1e-10, "min eigenvalue {min}");
    }

    #[test]
    fn weights_are_bounded_with_zero_diagonal(x in points(), sigma in 0.1f64..10.0) {
        let w = mutual_knn_weights(x.view(), &KnnParams::new(2, sigma)).unwrap();
        let w = w.matrix();
        for i in 0..x.nrows() {
            prop_assert_eq!(w[[i, i]], 0.0);
            for j in 0..x.nrows() {
                prop_assert!((0.0..=1.0).contains(&w[[i, j]]));
                prop_assert_eq!(w[[i, j]], w[[j, i]]);
            }
        }
    }

    #[test]
    fn permuting_rows_permutes_weights(x in points(), seed in any::<u64>()) {
        // Distinct distances keep the tie rule out of the picture.
        let n = x.nrows();
        let dim = x.dim();
        let x = x + &Array2::from_shape_fn(dim, |(i, j)| 1e-3 * (i * 7 + j * 3) as f64 / n as f64);
        let mut perm: Vec<usize> = (0..n).collect();
        let mut s = seed;
        for i in (1..n).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            perm.swap(i, (s >> 33) as usize % (i + 1));
        }
        let xp = Array2::from_shape_fn(x.dim(), |(i, j)| x[[perm[i], j]]);
        let params = KnnParams::new(3.min(n - 1), 2.0);
        let w = mutual_knn_weights(x.view(), &params).unwrap();
        let wp = mutual_knn_weights(xp.view(), &params).unwrap();
        for i in 0..n {
            for j in 0..n {
                prop_assert_eq!(wp.matrix()[[i, j]], w.matrix()[[perm[i], perm[j]]]);
            }
        }
    }

    #[test]
    fn larger_k_keeps_every_mutual_pair(x in points(), k in 1usize..3) {
        let n = x.nrows();
        prop_assume!(k + 1 < n);
        let small: Vec<_> = KnnGraph::build(x.view(), k).unwrap().pairs().collect();
        let large: Vec<_> = KnnGraph::build(x.view(), k + 1).unwrap().pairs().collect();
        for p in small {
            prop_assert!(large.contains(&p));
        }
    }
}
