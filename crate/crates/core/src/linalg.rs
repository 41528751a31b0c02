//! Dense symmetric linear algebra used by every other module.
//!
//! The covariances assembled for the SAM-family diffusion terms are first-order
//! expansions and can be slightly indefinite, so the matrix square root goes
//! through a symmetric eigendecomposition with explicit clamping rather than a
//! Cholesky factorization.

use nalgebra::linalg::SymmetricEigen;
use nalgebra::{DMatrix, DVector};

use crate::error::CoreError;

/// Parameter-space vector.
pub type Vector = DVector<f64>;
/// Dense real matrix.
pub type Matrix = DMatrix<f64>;

/// Relative asymmetry tolerated by [`SymMatrix::new`].
pub const SYMMETRY_RTOL: f64 = 1e-12;

/// A real symmetric matrix, validated on construction.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    data: Matrix,
}

impl SymMatrix {
    /// Wraps a matrix after checking squareness, finiteness, and symmetry to
    /// within [`SYMMETRY_RTOL`] relative tolerance.
    pub fn new(data: Matrix) -> Result<Self, CoreError> {
        if data.nrows() != data.ncols() {
            return Err(CoreError::invalid(format!(
                "expected square matrix, got {}x{}",
                data.nrows(),
                data.ncols()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(CoreError::NonFiniteMatrix);
        }
        let scale = data.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut max_asym = 0.0f64;
        for i in 0..data.nrows() {
            for j in (i + 1)..data.ncols() {
                max_asym = max_asym.max((data[(i, j)] - data[(j, i)]).abs());
            }
        }
        if max_asym > SYMMETRY_RTOL * scale.max(1e-300) {
            return Err(CoreError::NotSymmetric { max_asym });
        }
        Ok(SymMatrix { data })
    }

    /// Symmetrizes `(M + M^T)/2` and wraps the result. Intended for matrices
    /// built by finite differences, whose asymmetry is truncation noise.
    pub fn from_symmetrize(data: Matrix) -> Result<Self, CoreError> {
        let sym = 0.5 * (&data + data.transpose());
        SymMatrix::new(sym)
    }

    pub fn from_diagonal(diag: &Vector) -> Self {
        SymMatrix {
            data: Matrix::from_diagonal(diag),
        }
    }

    pub fn identity(d: usize) -> Self {
        SymMatrix {
            data: Matrix::identity(d, d),
        }
    }

    pub fn zeros(d: usize) -> Self {
        SymMatrix {
            data: Matrix::zeros(d, d),
        }
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.data
    }

    pub fn into_inner(self) -> Matrix {
        self.data
    }

    pub fn mul_vec(&self, v: &Vector) -> Vector {
        &self.data * v
    }

    pub fn trace(&self) -> f64 {
        self.data.trace()
    }

    /// True when every off-diagonal entry is exactly zero. Lets the quadratic
    /// models take an O(d) fast path for the large diagonal Hessians used in
    /// the high-dimensional saddle experiments.
    pub fn is_diagonal(&self) -> bool {
        let n = self.data.nrows();
        for i in 0..n {
            for j in 0..n {
                if i != j && self.data[(i, j)] != 0.0 {
                    return false;
                }
            }
        }
        true
    }
}

/// Eigendecomposition of a symmetric matrix with eigenvalues sorted in
/// descending order, matching the `lambda_1 >= ... >= lambda_d` convention of
/// the quadratic-case analysis.
#[derive(Debug, Clone)]
pub struct Eigen {
    /// Eigenvalues, descending.
    pub values: Vector,
    /// Orthogonal matrix whose columns are the corresponding eigenvectors.
    pub vectors: Matrix,
}

impl Eigen {
    /// Reconstructs `Q diag(values) Q^T`.
    pub fn reconstruct(&self) -> Matrix {
        &self.vectors * Matrix::from_diagonal(&self.values) * self.vectors.transpose()
    }
}

/// Symmetric eigendecomposition with descending eigenvalue order.
pub fn sym_eigendecompose(m: &SymMatrix) -> Eigen {
    let decomp = SymmetricEigen::new(m.data.clone());
    let d = m.dim();
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| {
        decomp.eigenvalues[b]
            .partial_cmp(&decomp.eigenvalues[a])
            .expect("eigenvalues are finite")
    });
    let values = Vector::from_iterator(d, order.iter().map(|&i| decomp.eigenvalues[i]));
    let mut vectors = Matrix::zeros(d, d);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &decomp.eigenvectors.column(src));
    }
    Eigen { values, vectors }
}

/// Result of [`psd_sqrt`]: the square root and how many eigenvalues were
/// clamped to zero.
#[derive(Debug, Clone)]
pub struct PsdSqrt {
    pub sqrt: SymMatrix,
    pub clamped: usize,
}

/// Symmetric square root of a (numerically) positive semi-definite matrix.
///
/// Eigenvalues in `[-clamp_tol, 0)` are clamped to zero and counted; an
/// eigenvalue below `-clamp_tol` is rejected as an indefinite covariance,
/// which signals that the ascent radius is too large for the first-order
/// covariance expansion.
pub fn psd_sqrt(m: &SymMatrix, clamp_tol: f64) -> Result<PsdSqrt, CoreError> {
    assert!(clamp_tol >= 0.0, "clamp_tol must be non-negative");
    let eig = sym_eigendecompose(m);
    let min_eigenvalue = eig.values[eig.values.len() - 1];
    if min_eigenvalue < -clamp_tol {
        return Err(CoreError::IndefiniteCovariance {
            min_eigenvalue,
            clamp_tol,
        });
    }
    let mut clamped = 0;
    let roots = Vector::from_iterator(
        eig.values.len(),
        eig.values.iter().map(|&v| {
            if v < 0.0 {
                clamped += 1;
                0.0
            } else {
                v.sqrt()
            }
        }),
    );
    let raw = &eig.vectors * Matrix::from_diagonal(&roots) * eig.vectors.transpose();
    Ok(PsdSqrt {
        sqrt: SymMatrix::from_symmetrize(raw)?,
        clamped,
    })
}

/// Relative Frobenius distance `||a - b||_F / max(||b||_F, 1e-300)`.
pub fn rel_frobenius(a: &Matrix, b: &Matrix) -> f64 {
    (a - b).norm() / b.norm().max(1e-300)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;
    use proptest::prelude::*;

    fn random_sym(d: usize, rng: &mut RngStream) -> SymMatrix {
        let raw = Matrix::from_fn(d, d, |_, _| rng.standard_normal());
        SymMatrix::from_symmetrize(raw).unwrap()
    }

    #[test]
    fn eigendecompose_identity() {
        let eig = sym_eigendecompose(&SymMatrix::identity(3));
        for v in eig.values.iter() {
            assert!((v - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn eigendecompose_diagonal_sorted() {
        let m = SymMatrix::from_diagonal(&Vector::from_vec(vec![-1.0, 2.0]));
        let eig = sym_eigendecompose(&m);
        assert!((eig.values[0] - 2.0).abs() < 1e-14);
        assert!((eig.values[1] + 1.0).abs() < 1e-14);
        // eigenvectors are the coordinate axes up to sign
        assert!((eig.vectors[(0, 0)].abs() - 0.0).abs() < 1e-12);
        assert!((eig.vectors[(1, 0)].abs() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn eigendecompose_reconstructs_random_5x5() {
        let mut rng = RngStream::new(7, 0);
        let m = random_sym(5, &mut rng);
        let eig = sym_eigendecompose(&m);
        assert!(rel_frobenius(&eig.reconstruct(), m.matrix()) < 1e-10);
    }

    #[test]
    fn non_symmetric_rejected() {
        let raw = Matrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0]);
        assert!(matches!(
            SymMatrix::new(raw),
            Err(CoreError::NotSymmetric { .. })
        ));
    }

    #[test]
    fn psd_sqrt_identity_and_diagonal() {
        let s = psd_sqrt(&SymMatrix::identity(4), 0.0).unwrap();
        assert!(rel_frobenius(s.sqrt.matrix(), SymMatrix::identity(4).matrix()) < 1e-14);

        let m = SymMatrix::from_diagonal(&Vector::from_vec(vec![4.0, 9.0]));
        let s = psd_sqrt(&m, 0.0).unwrap();
        assert!((s.sqrt.matrix()[(0, 0)] - 2.0).abs() < 1e-12);
        assert!((s.sqrt.matrix()[(1, 1)] - 3.0).abs() < 1e-12);
        assert_eq!(s.clamped, 0);
    }

    #[test]
    fn psd_sqrt_clamps_small_negative_eigenvalue() {
        // eigenvalues {1, -1e-9}, rotated so clamping is exercised off-diagonal
        let mut rng = RngStream::new(11, 0);
        let basis = sym_eigendecompose(&random_sym(2, &mut rng)).vectors;
        let lam = Vector::from_vec(vec![1.0, -1e-9]);
        let m = SymMatrix::from_symmetrize(
            &basis * Matrix::from_diagonal(&lam) * basis.transpose(),
        )
        .unwrap();
        let s = psd_sqrt(&m, 1e-8).unwrap();
        assert_eq!(s.clamped, 1);
        // S*S equals m with the negative eigenvalue zeroed
        let clamped_lam = Vector::from_vec(vec![1.0, 0.0]);
        let target = &basis * Matrix::from_diagonal(&clamped_lam) * basis.transpose();
        let ss = s.sqrt.matrix() * s.sqrt.matrix();
        assert!(rel_frobenius(&ss, &target) < 1e-10);
    }

    #[test]
    fn psd_sqrt_rejects_indefinite() {
        let m = SymMatrix::from_diagonal(&Vector::from_vec(vec![1.0, -1e-3]));
        match psd_sqrt(&m, 1e-8) {
            Err(CoreError::IndefiniteCovariance { min_eigenvalue, .. }) => {
                assert!((min_eigenvalue + 1e-3).abs() < 1e-12)
            }
            other => panic!("expected indefinite covariance error, got {other:?}"),
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn eigendecompose_reconstruction_identity(seed in 0u64..1000, d in 1usize..=50) {
            let mut rng = RngStream::new(seed, 3);
            let m = random_sym(d, &mut rng);
            let eig = sym_eigendecompose(&m);
            prop_assert!(rel_frobenius(&eig.reconstruct(), m.matrix()) < 1e-10);
            for i in 1..d {
                prop_assert!(eig.values[i - 1] >= eig.values[i]);
            }
        }

        #[test]
        fn psd_sqrt_squares_back_on_psd(seed in 0u64..1000, d in 1usize..=20) {
            let mut rng = RngStream::new(seed, 4);
            let a = Matrix::from_fn(d, d, |_, _| rng.standard_normal());
            let psd = SymMatrix::from_symmetrize(&a * a.transpose()).unwrap();
            let s = psd_sqrt(&psd, 1e-8).unwrap();
            let ss = s.sqrt.matrix() * s.sqrt.matrix();
            prop_assert!(rel_frobenius(&ss, psd.matrix()) < 1e-10);
        }
    }
}
