//! Dense-matrix oracles for the structured operators.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use ndarray::Array2;
use nmr2d::operator::{unvectorize, vectorize};
use nmr2d::regularizer::laplacian_apply;
use nmr2d::solver::{soft_threshold, stepsize};
use nmr2d::KroneckerOperator;
use proptest::prelude::*;

fn matrix(rows: usize, cols: usize, values: &[f64]) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |(i, j)| values[(i * cols + j) % values.len()])
}

fn to_dense(a: &Array2<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

/// Column-major vec index convention: `p = i + j·n1`.
fn dense_laplacian(n1: usize, n2: usize) -> DMatrix<f64> {
    let n = n1 * n2;
    let mut l = DMatrix::zeros(n, n);
    for j in 0..n2 {
        for i in 0..n1 {
            let p = i + j * n1;
            let mut neighbours = Vec::new();
            if i > 0 {
                neighbours.push(p - 1);
            }
            if i + 1 < n1 {
                neighbours.push(p + 1);
            }
            if j > 0 {
                neighbours.push(p - n1);
            }
            if j + 1 < n2 {
                neighbours.push(p + n1);
            }
            l[(p, p)] = -(neighbours.len() as f64);
            for q in neighbours {
                l[(p, q)] = 1.0;
            }
        }
    }
    l
}

proptest! {
    #[test]
    fn apply_and_adjoint_match_dense_kronecker(
        m1 in 1usize..7, n1 in 1usize..6, m2 in 1usize..7, n2 in 1usize..6,
        values in prop::collection::vec(-1.0f64..1.0, 40),
    ) {
        let k1 = matrix(m1, n1, &values);
        let k2 = matrix(m2, n2, &values[7..]);
        let op = KroneckerOperator::new(k1.clone(), k2.clone()).unwrap();
        let dense = to_dense(&k2).kronecker(&to_dense(&k1));
        let f = matrix(n1, n2, &values[3..]);
        let fv = DVector::from_iterator(n1 * n2, vectorize(f.view()).iter().copied());

        let got = vectorize(op.apply_map(f.view()).unwrap().view());
        let want = &dense * &fv;
        let scale = want.norm().max(1e-300);
        let err = got.iter().zip(want.iter()).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        prop_assert!(err <= 1e-12 * scale.max(1.0));

        let r = matrix(m1, m2, &values[11..]);
        let rv = DVector::from_iterator(m1 * m2, vectorize(r.view()).iter().copied());
        let got = vectorize(op.adjoint_map(r.view()).unwrap().view());
        let want = dense.transpose() * &rv;
        let err = got.iter().zip(want.iter()).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        prop_assert!(err <= 1e-12 * want.norm().max(1.0));
    }

    #[test]
    fn stepsize_bounds_the_hessian(
        m1 in 3usize..9, n1 in 3usize..7, m2 in 3usize..9, n2 in 3usize..7,
        values in prop::collection::vec(-1.0f64..1.0, 40),
        lambda in prop::collection::vec(0.0f64..10.0, 36),
    ) {
        let k1 = matrix(m1, n1, &values);
        let k2 = matrix(m2, n2, &values[5..]);
        let op = KroneckerOperator::new(k1.clone(), k2.clone()).unwrap();
        let k = to_dense(&k2).kronecker(&to_dense(&k1));
        let lam = matrix(n1, n2, &lambda);
        let lam_v = vectorize(lam.view());
        let l = dense_laplacian(n1, n2);
        let h = k.transpose() * &k + l.transpose() * DMatrix::from_diagonal(&DVector::from_iterator(n1 * n2, lam_v.iter().copied())) * &l;
        let top = SymmetricEigen::new(h).eigenvalues.max();
        let (s1, s2) = op.sigmas();
        let xi = stepsize(s1, s2, lam.iter());
        prop_assert!(xi >= top * (1.0 - 1e-12), "xi {} < {}", xi, top);
    }

    #[test]
    fn laplacian_matches_dense_assembly(
        n1 in 3usize..8, n2 in 3usize..8,
        values in prop::collection::vec(-1.0f64..1.0, 49),
    ) {
        let f = matrix(n1, n2, &values);
        let got = vectorize(laplacian_apply(f.view()).unwrap().view());
        let fv = DVector::from_iterator(n1 * n2, vectorize(f.view()).iter().copied());
        let want = dense_laplacian(n1, n2) * fv;
        for (a, b) in got.iter().zip(want.iter()) {
            prop_assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn soft_threshold_is_non_expansive(
        a in prop::collection::vec(-5.0f64..5.0, 16),
        b in prop::collection::vec(-5.0f64..5.0, 16),
        theta in 0.0f64..3.0,
    ) {
        let (a, b) = (ndarray::Array1::from(a), ndarray::Array1::from(b));
        let pa = soft_threshold(a.view(), theta).unwrap();
        let pb = soft_threshold(b.view(), theta).unwrap();
        let d_out = (&pa - &pb).mapv(|v| v * v).sum().sqrt();
        let d_in = (&a - &b).mapv(|v| v * v).sum().sqrt();
        prop_assert!(d_out <= d_in + 1e-12);
    }

    #[test]
    fn vec_round_trip(n1 in 1usize..9, n2 in 1usize..9, values in prop::collection::vec(-1.0f64..1.0, 64)) {
        let f = matrix(n1, n2, &values);
        prop_assert_eq!(unvectorize(vectorize(f.view()).view(), n1, n2).unwrap(), f);
    }
}
