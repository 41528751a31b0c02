//! Stochastic gradient oracles.
//!
//! Both kinds are unbiased: the expectation of a sampled gradient equals the
//! full gradient. A [`GradDraw`] pins one realization of the randomness so the
//! SAM-style updates can evaluate the *same* perturbed objective at two
//! points, and so the SDE builders can form Hessian-vector products for the
//! same draw.

use crate::error::CoreError;
use crate::linalg::Vector;
use crate::rng::RngStream;

use super::LossModel;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GradOracle {
    /// `grad f_gamma(x) = grad f(x) + Z`, `Z ~ N(0, sigma^2 I)`.
    AdditiveGaussian { sigma: f64 },
    /// Mean gradient over `batch` dataset indices drawn uniformly with
    /// replacement (the i.i.d. minibatch model).
    Minibatch { batch: usize },
}

/// One realization of oracle randomness, reusable at several points.
pub struct GradDraw {
    /// The sampled gradient at the draw point.
    pub grad: Vector,
    payload: DrawPayload,
}

enum DrawPayload {
    Additive { z: Vector },
    Batch { indices: Vec<usize> },
}

impl GradOracle {
    /// Draws one stochastic gradient at `x`, keeping the realization so it can
    /// be re-evaluated elsewhere.
    pub fn draw(
        &self,
        model: &dyn LossModel,
        x: &Vector,
        rng: &mut RngStream,
    ) -> Result<GradDraw, CoreError> {
        match *self {
            GradOracle::AdditiveGaussian { sigma } => {
                let mut z = Vector::zeros(model.dim());
                rng.fill_standard_normal(z.as_mut_slice());
                z *= sigma;
                Ok(GradDraw {
                    grad: model.grad(x) + &z,
                    payload: DrawPayload::Additive { z },
                })
            }
            GradOracle::Minibatch { batch } => {
                let per = model.per_example().ok_or(CoreError::MinibatchUnsupported)?;
                let n = per.num_examples();
                if batch == 0 || batch > n {
                    return Err(CoreError::invalid(format!(
                        "batch size {batch} out of range 1..={n}"
                    )));
                }
                let indices: Vec<usize> = (0..batch).map(|_| rng.index(n)).collect();
                Ok(GradDraw {
                    grad: per.batch_grad(x, &indices),
                    payload: DrawPayload::Batch { indices },
                })
            }
        }
    }

    /// Gradient of the same realization at another point `y`.
    pub fn grad_at(
        &self,
        model: &dyn LossModel,
        draw: &GradDraw,
        y: &Vector,
    ) -> Result<Vector, CoreError> {
        match &draw.payload {
            DrawPayload::Additive { z } => Ok(model.grad(y) + z),
            DrawPayload::Batch { indices } => {
                let per = model.per_example().ok_or(CoreError::MinibatchUnsupported)?;
                Ok(per.batch_grad(y, indices))
            }
        }
    }

    /// Hessian-vector product `hess f_gamma(x) * v` for the same realization.
    /// Additive noise leaves the Hessian untouched; minibatches use a central
    /// finite difference of the batch gradient along `v`.
    pub fn hvp_at(
        &self,
        model: &dyn LossModel,
        draw: &GradDraw,
        x: &Vector,
        v: &Vector,
    ) -> Result<Vector, CoreError> {
        match &draw.payload {
            DrawPayload::Additive { .. } => Ok(model.hessian(x).mul_vec(v)),
            DrawPayload::Batch { indices } => {
                let per = model.per_example().ok_or(CoreError::MinibatchUnsupported)?;
                let vn = v.norm();
                if vn == 0.0 {
                    return Ok(Vector::zeros(x.len()));
                }
                let h = 1e-5 * x.amax().max(1.0) / vn;
                let gp = per.batch_grad(&(x + h * v), indices);
                let gm = per.batch_grad(&(x - h * v), indices);
                Ok((gp - gm) / (2.0 * h))
            }
        }
    }

    /// The injected-noise view of a draw: `Z = grad f_gamma(x) - grad f(x)`.
    pub fn noise_of(&self, full_grad: &Vector, draw: &GradDraw) -> Vector {
        &draw.grad - full_grad
    }
}

/// Samples one stochastic gradient at `x`.
pub fn oracle_sample(
    model: &dyn LossModel,
    oracle: &GradOracle,
    x: &Vector,
    rng: &mut RngStream,
) -> Result<Vector, CoreError> {
    Ok(oracle.draw(model, x, rng)?.grad)
}
