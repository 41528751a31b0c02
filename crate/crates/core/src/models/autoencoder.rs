//! Linear autoencoder landscape with a saddle at the origin.

use crate::linalg::{Matrix, SymMatrix, Vector};

use super::{fd_hessian_of_grad, HessianKind, LossModel};

/// `loss(W1, W2) = ||W2 W1 - I_d||_F^2` over `x = vec(W1) ++ vec(W2)`
/// (column-major, `dim = 2 d^2`).
pub struct LinearAutoencoderModel {
    d: usize,
}

pub fn linear_autoencoder_model(d: usize) -> LinearAutoencoderModel {
    assert!(d >= 1);
    LinearAutoencoderModel { d }
}

impl LinearAutoencoderModel {
    fn unpack(&self, x: &Vector) -> (Matrix, Matrix) {
        let d = self.d;
        let w1 = Matrix::from_column_slice(d, d, &x.as_slice()[..d * d]);
        let w2 = Matrix::from_column_slice(d, d, &x.as_slice()[d * d..]);
        (w1, w2)
    }

    /// Packs `(W1, W2)` into a parameter vector.
    pub fn pack(&self, w1: &Matrix, w2: &Matrix) -> Vector {
        let mut x = Vector::zeros(2 * self.d * self.d);
        x.as_mut_slice()[..self.d * self.d].copy_from_slice(w1.as_slice());
        x.as_mut_slice()[self.d * self.d..].copy_from_slice(w2.as_slice());
        x
    }
}

impl LossModel for LinearAutoencoderModel {
    fn dim(&self) -> usize {
        2 * self.d * self.d
    }

    fn value(&self, x: &Vector) -> f64 {
        let (w1, w2) = self.unpack(x);
        let r = w2 * w1 - Matrix::identity(self.d, self.d);
        r.norm_squared()
    }

    fn grad(&self, x: &Vector) -> Vector {
        let (w1, w2) = self.unpack(x);
        let r = &w2 * &w1 - Matrix::identity(self.d, self.d);
        let g1 = 2.0 * w2.transpose() * &r;
        let g2 = 2.0 * &r * w1.transpose();
        self.pack(&g1, &g2)
    }

    fn hessian(&self, x: &Vector) -> SymMatrix {
        fd_hessian_of_grad(&|y| self.grad(y), x)
    }

    fn hessian_kind(&self) -> HessianKind {
        HessianKind::FiniteDifference
    }
}
