//! Loss landscapes and stochastic-gradient oracles.
//!
//! Every optimizer and SDE in this crate runs against a [`LossModel`]: a
//! differentiable objective exposing its dimension, value, gradient, and full
//! Hessian (analytic where cheap, central finite differences of the gradient
//! otherwise). Stochasticity is supplied separately by a [`GradOracle`].

mod autoencoder;
mod dataset;
mod mlp;
mod oracle;
mod quadratic;

pub use autoencoder::{linear_autoencoder_model, LinearAutoencoderModel};
pub use dataset::{load_dataset_csv, synth_dataset, Dataset, SynthKind};
pub use mlp::{mlp_model, teacher_student_dataset, Activation, LossHead, MlpArch, MlpModel};
pub use oracle::{oracle_sample, GradDraw, GradOracle};
pub use quadratic::{embedded_saddle_model, quadratic_model, EmbeddedSaddleModel, QuadraticModel};

use crate::linalg::{Matrix, SymMatrix, Vector};

/// How a model produces its Hessian.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HessianKind {
    Analytic,
    FiniteDifference,
}

/// A differentiable objective.
///
/// Implementations are immutable after construction so that ensembles can
/// evaluate them from many threads concurrently.
pub trait LossModel: Send + Sync {
    fn dim(&self) -> usize;
    fn value(&self, x: &Vector) -> f64;
    fn grad(&self, x: &Vector) -> Vector;
    fn hessian(&self, x: &Vector) -> SymMatrix;
    fn hessian_kind(&self) -> HessianKind;

    /// Per-example gradient access, for models backed by a dataset. Models
    /// without one return `None` and cannot be paired with minibatch oracles.
    fn per_example(&self) -> Option<&dyn PerExampleGrad> {
        None
    }
}

/// Per-example gradient access for minibatch sampling.
pub trait PerExampleGrad: Send + Sync {
    /// Number of examples in the backing dataset.
    fn num_examples(&self) -> usize;
    /// Mean gradient over the given example indices (repeats allowed).
    fn batch_grad(&self, x: &Vector, indices: &[usize]) -> Vector;
}

/// Central finite difference of `f` along each coordinate, step
/// `rel_step * max(1, |x_i|)` per coordinate.
pub fn fd_grad(f: &dyn Fn(&Vector) -> f64, x: &Vector, rel_step: f64) -> Vector {
    let mut g = Vector::zeros(x.len());
    let mut xp = x.clone();
    for i in 0..x.len() {
        let h = rel_step * x[i].abs().max(1.0);
        let orig = x[i];
        xp[i] = orig + h;
        let fp = f(&xp);
        xp[i] = orig - h;
        let fm = f(&xp);
        xp[i] = orig;
        g[i] = (fp - fm) / (2.0 * h);
    }
    g
}

/// Hessian by central finite differences of a gradient function, step
/// `1e-5 * max(1, ||x||_inf)`, symmetrized.
pub fn fd_hessian_of_grad(grad: &dyn Fn(&Vector) -> Vector, x: &Vector) -> SymMatrix {
    let d = x.len();
    let h = 1e-5 * x.amax().max(1.0);
    let mut m = Matrix::zeros(d, d);
    let mut xp = x.clone();
    for j in 0..d {
        let orig = x[j];
        xp[j] = orig + h;
        let gp = grad(&xp);
        xp[j] = orig - h;
        let gm = grad(&xp);
        xp[j] = orig;
        let col = (gp - gm) / (2.0 * h);
        m.set_column(j, &col);
    }
    SymMatrix::from_symmetrize(m).expect("finite-difference Hessian is finite")
}

#[cfg(test)]
pub(crate) mod checks {
    use super::*;
    use crate::rng::RngStream;

    /// Relative gradient error against central finite differences at `points`
    /// random points. Used as the derivative oracle throughout the test suite.
    pub fn max_grad_fd_rel_error(
        model: &dyn LossModel,
        points: usize,
        scale: f64,
        seed: u64,
    ) -> f64 {
        let mut rng = RngStream::new(seed, 100);
        let mut worst = 0.0f64;
        for _ in 0..points {
            let x = Vector::from_fn(model.dim(), |_, _| scale * rng.standard_normal());
            let g = model.grad(&x);
            let fd = fd_grad(&|y| model.value(y), &x, 1e-6);
            let err = (&g - &fd).norm() / g.norm().max(1.0);
            worst = worst.max(err);
        }
        worst
    }
}
