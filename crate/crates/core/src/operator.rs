//! Kronecker-structured forward operator `K = K2 ⊗ K1`.
//!
//! The operator is never materialized. With `f = vec(F)` (column-major
//! stacking of the `N1 × N2` map) the product is evaluated as
//! `K f = vec(K1 · F · K2ᵀ)` and the adjoint as `Kᵀ r = vec(K1ᵀ · R · K2)`.

use nalgebra::DMatrix;
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, ShapeBuilder};

use crate::error::{check_len, Error, Result};

/// Column-major `vec(F)`.
pub fn vectorize(map: ArrayView2<f64>) -> Array1<f64> {
    map.t().iter().copied().collect()
}

/// Inverse of [`vectorize`].
pub fn unvectorize(v: ArrayView1<f64>, n1: usize, n2: usize) -> Result<Array2<f64>> {
    check_len("unvectorize", n1 * n2, v.len())?;
    Ok(Array2::from_shape_vec((n1, n2).f(), v.to_vec()).expect("length checked"))
}

#[derive(Debug, Clone)]
pub struct KroneckerOperator {
    k1: Array2<f64>,
    k2: Array2<f64>,
    sigma1: f64,
    sigma2: f64,
}

impl KroneckerOperator {
    pub fn new(k1: Array2<f64>, k2: Array2<f64>) -> Result<Self> {
        let (sigma1, sigma2) = leading_singular_values(k1.view(), k2.view())?;
        Ok(Self {
            k1,
            k2,
            sigma1,
            sigma2,
        })
    }

    pub fn k1(&self) -> &Array2<f64> {
        &self.k1
    }

    pub fn k2(&self) -> &Array2<f64> {
        &self.k2
    }

    /// Largest singular values `(σ(K1), σ(K2))`.
    pub fn sigmas(&self) -> (f64, f64) {
        (self.sigma1, self.sigma2)
    }

    /// Spectral norm of the full operator, `σ(K1)·σ(K2)`.
    pub fn norm(&self) -> f64 {
        self.sigma1 * self.sigma2
    }

    /// `(N1, N2)`
    pub fn map_shape(&self) -> (usize, usize) {
        (self.k1.ncols(), self.k2.ncols())
    }

    /// `(M1, M2)`
    pub fn data_shape(&self) -> (usize, usize) {
        (self.k1.nrows(), self.k2.nrows())
    }

    pub fn apply(&self, f: ArrayView1<f64>) -> Result<Array1<f64>> {
        let (n1, n2) = self.map_shape();
        let map = unvectorize(f, n1, n2)?;
        Ok(vectorize(self.apply_map(map.view())?.view()))
    }

    pub fn adjoint(&self, r: ArrayView1<f64>) -> Result<Array1<f64>> {
        let (m1, m2) = self.data_shape();
        let data = unvectorize(r, m1, m2)?;
        Ok(vectorize(self.adjoint_map(data.view())?.view()))
    }

    /// `K1 · F · K2ᵀ`
    pub fn apply_map(&self, map: ArrayView2<f64>) -> Result<Array2<f64>> {
        let (n1, n2) = self.map_shape();
        check_len("apply: map rows", n1, map.nrows())?;
        check_len("apply: map columns", n2, map.ncols())?;
        Ok(self.k1.dot(&map).dot(&self.k2.t()))
    }

    /// `K1ᵀ · R · K2`
    pub fn adjoint_map(&self, data: ArrayView2<f64>) -> Result<Array2<f64>> {
        let (m1, m2) = self.data_shape();
        check_len("adjoint: data rows", m1, data.nrows())?;
        check_len("adjoint: data columns", m2, data.ncols())?;
        Ok(self.k1.t().dot(&data).dot(&self.k2))
    }

    /// Projects the data onto the leading left singular subspaces of both
    /// factors and replaces the factors by `Σ Vᵀ`, dropping singular values
    /// below `threshold · σ_max` in each factor.
    ///
    /// The least-squares objective is preserved up to the constant
    /// [`CompressedProblem::offset`]: `‖K f − s‖² = ‖K̃ f − s̃‖² + offset`.
    pub fn compress(&self, data: ArrayView2<f64>, threshold: f64) -> Result<CompressedProblem> {
        if !(0.0..1.0).contains(&threshold) {
            return Err(Error::Config(format!(
                "SVD threshold must lie in [0, 1), got {threshold}"
            )));
        }
        let (m1, m2) = self.data_shape();
        check_len("compress: data rows", m1, data.nrows())?;
        check_len("compress: data columns", m2, data.ncols())?;

        let f1 = TruncatedSvd::new(self.k1.view(), threshold);
        let f2 = TruncatedSvd::new(self.k2.view(), threshold);
        let reduced = f1.u.t().dot(&data).dot(&f2.u);
        let data_norm_sq = sum_sq(data);
        let offset = (data_norm_sq - sum_sq(reduced.view())).max(0.0);
        let operator = KroneckerOperator {
            k1: f1.sigma_vt(),
            k2: f2.sigma_vt(),
            sigma1: self.sigma1,
            sigma2: self.sigma2,
        };
        Ok(CompressedProblem {
            operator,
            data: reduced,
            offset,
            data_norm_sq,
            ranks: (f1.s.len(), f2.s.len()),
        })
    }

    /// `‖K1·F·K2ᵀ − S‖²`
    pub fn residual_norm_sq(&self, map: ArrayView2<f64>, data: ArrayView2<f64>) -> Result<f64> {
        let mut r = self.apply_map(map)?;
        check_len("residual: data rows", r.nrows(), data.nrows())?;
        check_len("residual: data columns", r.ncols(), data.ncols())?;
        r -= &data;
        Ok(sum_sq(r.view()))
    }
}

/// Least-squares problem expressed in the retained singular subspaces.
#[derive(Debug, Clone)]
pub struct CompressedProblem {
    pub operator: KroneckerOperator,
    /// `U1ᵀ · S · U2`
    pub data: Array2<f64>,
    /// Energy of the data outside the retained subspaces, `‖S‖² − ‖s̃‖²`.
    pub offset: f64,
    pub data_norm_sq: f64,
    /// Retained ranks `(r1, r2)`.
    pub ranks: (usize, usize),
}

impl CompressedProblem {
    /// The original problem in the same wrapper, without any projection.
    pub fn uncompressed(op: &KroneckerOperator, data: ArrayView2<f64>) -> Result<Self> {
        let (m1, m2) = op.data_shape();
        check_len("data rows", m1, data.nrows())?;
        check_len("data columns", m2, data.ncols())?;
        Ok(Self {
            operator: op.clone(),
            data: data.to_owned(),
            offset: 0.0,
            data_norm_sq: sum_sq(data),
            ranks: op.map_shape(),
        })
    }

    /// Full-space `‖K f − s‖²`, evaluated in the compressed space.
    pub fn residual_norm_sq(&self, map: ArrayView2<f64>) -> Result<f64> {
        Ok(self.operator.residual_norm_sq(map, self.data.view())? + self.offset)
    }

    pub fn relative_residual(&self, map: ArrayView2<f64>) -> Result<f64> {
        let r = self.residual_norm_sq(map)?.sqrt();
        Ok(if self.data_norm_sq > 0.0 {
            r / self.data_norm_sq.sqrt()
        } else {
            r
        })
    }
}

pub(crate) fn sum_sq(a: ArrayView2<f64>) -> f64 {
    a.iter().map(|v| v * v).sum()
}

fn to_dmatrix(a: ArrayView2<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

struct TruncatedSvd {
    u: Array2<f64>,
    s: Vec<f64>,
    vt: Array2<f64>,
}

impl TruncatedSvd {
    fn new(a: ArrayView2<f64>, threshold: f64) -> Self {
        let svd = to_dmatrix(a).svd(true, true);
        let u = svd.u.expect("requested U");
        let vt = svd.v_t.expect("requested Vᵀ");
        let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
        order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
        let smax = order.first().map_or(0.0, |&i| svd.singular_values[i]);
        let keep: Vec<usize> = order
            .into_iter()
            .filter(|&i| svd.singular_values[i] >= threshold * smax)
            .collect();
        let u = Array2::from_shape_fn((u.nrows(), keep.len()), |(r, c)| u[(r, keep[c])]);
        let vt = Array2::from_shape_fn((keep.len(), vt.ncols()), |(r, c)| vt[(keep[r], c)]);
        let s = keep.iter().map(|&i| svd.singular_values[i]).collect();
        Self { u, s, vt }
    }

    fn sigma_vt(&self) -> Array2<f64> {
        let mut out = self.vt.clone();
        for (mut row, &s) in out.rows_mut().into_iter().zip(&self.s) {
            row *= s;
        }
        out
    }
}

pub fn largest_singular_value(a: ArrayView2<f64>) -> Result<f64> {
    if a.is_empty() {
        return Err(Error::Data("singular value of an empty matrix".into()));
    }
    let sv = to_dmatrix(a).singular_values();
    Ok(sv.iter().copied().fold(0.0, f64::max))
}

/// Largest singular values of the two kernel factors.
pub fn leading_singular_values(k1: ArrayView2<f64>, k2: ArrayView2<f64>) -> Result<(f64, f64)> {
    Ok((largest_singular_value(k1)?, largest_singular_value(k2)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Array2<f64> {
        Array2::from_shape_fn((r, c), |_| rng.random_range(-1.0..1.0))
    }

    /// Explicit `(K2 ⊗ K1)` for small shapes.
    fn dense_kron(k1: &Array2<f64>, k2: &Array2<f64>) -> Array2<f64> {
        let (m1, n1) = k1.dim();
        let (m2, n2) = k2.dim();
        Array2::from_shape_fn((m1 * m2, n1 * n2), |(row, col)| {
            k2[[row / m1, col / n1]] * k1[[row % m1, col % n1]]
        })
    }

    fn power_iteration(a: &Array2<f64>) -> f64 {
        let ata = a.t().dot(a);
        let mut v = Array1::from_elem(ata.ncols(), 1.0);
        let mut est = 0.0;
        for _ in 0..20000 {
            let w = ata.dot(&v);
            let norm = w.dot(&w).sqrt();
            v = w / norm;
            if (norm - est).abs() <= 1e-15 * norm {
                est = norm;
                break;
            }
            est = norm;
        }
        est.sqrt()
    }

    #[test]
    fn vec_is_column_major() {
        let m = array![[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]];
        assert_eq!(vectorize(m.view()).to_vec(), vec![1.0, 4.0, 2.0, 5.0, 3.0, 6.0]);
        let back = unvectorize(vectorize(m.view()).view(), 2, 3).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn zero_in_zero_out() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let op = KroneckerOperator::new(random_matrix(&mut rng, 3, 2), random_matrix(&mut rng, 4, 3)).unwrap();
        assert!(op.apply(Array1::zeros(6).view()).unwrap().iter().all(|&v| v == 0.0));
        assert!(op.adjoint(Array1::zeros(12).view()).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn scalar_identity() {
        let op = KroneckerOperator::new(array![[1.0]], array![[1.0]]).unwrap();
        assert_eq!(op.apply(array![2.5].view()).unwrap(), array![2.5]);
        assert_eq!(op.adjoint(array![-0.5].view()).unwrap(), array![-0.5]);
    }

    #[test]
    fn identity_factors_adjoint_is_identity() {
        let op = KroneckerOperator::new(Array2::eye(3), Array2::eye(2)).unwrap();
        let r = array![1.0, -2.0, 3.0, 0.5, 0.0, 7.0];
        assert_eq!(op.adjoint(r.view()).unwrap(), r);
    }

    #[test]
    fn apply_matches_dense_kronecker() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let k1 = random_matrix(&mut rng, 3, 2);
        let k2 = random_matrix(&mut rng, 4, 3);
        let f = Array1::from_shape_fn(6, |_| rng.random_range(-1.0..1.0));
        let op = KroneckerOperator::new(k1.clone(), k2.clone()).unwrap();
        let dense = dense_kron(&k1, &k2).dot(&f);
        let fast = op.apply(f.view()).unwrap();
        for (a, b) in fast.iter().zip(dense.iter()) {
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1e-300) || (a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn adjoint_inner_product_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let op = KroneckerOperator::new(random_matrix(&mut rng, 5, 4), random_matrix(&mut rng, 6, 3)).unwrap();
            let f = Array1::from_shape_fn(12, |_| rng.random_range(-1.0..1.0));
            let r = Array1::from_shape_fn(30, |_| rng.random_range(-1.0..1.0));
            let lhs = op.apply(f.view()).unwrap().dot(&r);
            let rhs = f.dot(&op.adjoint(r.view()).unwrap());
            assert!((lhs - rhs).abs() <= 1e-10 * lhs.abs().max(rhs.abs()));
        }
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let op = KroneckerOperator::new(Array2::eye(3), Array2::eye(2)).unwrap();
        assert!(matches!(op.apply(Array1::zeros(5).view()), Err(Error::Dimension { .. })));
        assert!(matches!(op.adjoint(Array1::zeros(7).view()), Err(Error::Dimension { .. })));
    }

    #[test]
    fn singular_values_simple_cases() {
        assert!((largest_singular_value(Array2::<f64>::eye(4).view()).unwrap() - 1.0).abs() < 1e-14);
        let d = array![[3.0, 0.0], [0.0, 1.0]];
        assert!((largest_singular_value(d.view()).unwrap() - 3.0).abs() < 1e-14);
    }

    #[test]
    fn singular_value_matches_power_iteration() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_matrix(&mut rng, 10, 6);
        let svd = largest_singular_value(a.view()).unwrap();
        let pow = power_iteration(&a);
        assert!((svd - pow).abs() / pow < 1e-8, "{svd} vs {pow}");
    }

    #[test]
    fn operator_norm_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let op = KroneckerOperator::new(random_matrix(&mut rng, 7, 5), random_matrix(&mut rng, 6, 4)).unwrap();
        for _ in 0..50 {
            let f = Array1::from_shape_fn(20, |_| rng.random_range(-1.0..1.0));
            let kf = op.apply(f.view()).unwrap();
            assert!(kf.dot(&kf).sqrt() <= op.norm() * f.dot(&f).sqrt() * (1.0 + 1e-12));
        }
    }

    #[test]
    fn compression_without_truncation_preserves_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let op = KroneckerOperator::new(random_matrix(&mut rng, 9, 4), random_matrix(&mut rng, 12, 5)).unwrap();
        let data = random_matrix(&mut rng, 9, 12);
        let problem = op.compress(data.view(), 0.0).unwrap();
        assert_eq!(problem.ranks, (4, 5));
        for _ in 0..10 {
            let map = random_matrix(&mut rng, 4, 5);
            let full = op.residual_norm_sq(map.view(), data.view()).unwrap().sqrt();
            let compressed = problem.residual_norm_sq(map.view()).unwrap().sqrt();
            assert!((full - compressed).abs() <= 1e-12 * full);
        }
    }

    #[test]
    fn rank_one_factor_keeps_single_triplet() {
        let u = array![[1.0], [2.0], [-1.0], [0.5]];
        let v = array![[0.3, -1.0, 2.0]];
        let k1 = u.dot(&v);
        let op = KroneckerOperator::new(k1, Array2::eye(3)).unwrap();
        let problem = op.compress(Array2::ones((4, 3)).view(), 0.5).unwrap();
        assert_eq!(problem.ranks.0, 1);
        assert_eq!(problem.operator.k1().nrows(), 1);
    }

    #[test]
    fn compression_rejects_bad_threshold() {
        let op = KroneckerOperator::new(Array2::eye(2), Array2::eye(2)).unwrap();
        assert!(op.compress(Array2::ones((2, 2)).view(), 1.0).is_err());
        assert!(op.compress(Array2::ones((2, 2)).view(), -0.1).is_err());
    }
}
