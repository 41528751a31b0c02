//! Drift and diffusion evaluators for the continuous-time models.
//!
//! Every system is expressed as `dX = b(X) dt + sigma(X) dW` with the
//! `sqrt(eta)` factor folded into `sigma`, matching the scaling at which the
//! continuous process is compared with the discrete iterates at times
//! `t = k eta`.
//!
//! Expectation terms (the gradient-norm regularizers and the cross-covariance
//! corrections to the diffusion) are re-estimated with fresh oracle draws at
//! every drift/diffusion evaluation, so drift and diffusion noise stay
//! uncorrelated.

mod integrator;

pub use integrator::{em_integrate, em_stream};

use crate::error::CoreError;
use crate::linalg::{psd_sqrt, Matrix, SymMatrix, Vector};
use crate::models::{GradOracle, LossModel};
use crate::rng::RngStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SdeVariant {
    /// Order-1 weak approximation of SGD; also the model for the whole family
    /// in the small-radius regime `rho = O(eta)`.
    Sgd,
    /// USAM with the cross-covariance correction estimated from oracle draws.
    UsamGeneral,
    /// USAM under constant gradient-noise covariance:
    /// drift `-(I + rho H) grad f`, diffusion `(I + rho H) sqrt(eta) Sigma^{1/2}`.
    UsamSimplified,
    /// DNSAM: the USAM form with the curvature term scaled by `1/||grad f||`,
    /// capped at `1/eps_floor`.
    Dnsam,
    /// SAM with drift and diffusion corrections estimated from oracle draws of
    /// the normalized gradient.
    SamGeneral,
    /// SAM under constant gradient-noise covariance (the `H Sigma-bar` form).
    SamSimplified,
    /// Deterministic RSAM drift on the trace-regularized loss
    /// `f + (sigma^2/2) Tr hess f`; zero diffusion.
    RsamDriftOde,
}

impl SdeVariant {
    pub fn name(&self) -> &'static str {
        match self {
            SdeVariant::Sgd => "sgd-sde",
            SdeVariant::UsamGeneral => "usam-sde-general",
            SdeVariant::UsamSimplified => "usam-sde",
            SdeVariant::Dnsam => "dnsam-sde",
            SdeVariant::SamGeneral => "sam-sde-general",
            SdeVariant::SamSimplified => "sam-sde",
            SdeVariant::RsamDriftOde => "rsam-ode",
        }
    }

    fn needs_additive_noise(&self) -> bool {
        matches!(
            self,
            SdeVariant::UsamSimplified | SdeVariant::Dnsam | SdeVariant::SamSimplified
        )
    }
}

/// Configuration shared by the SDE builders and the integrator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SdeConfig {
    /// Learning rate of the discrete algorithm being modeled; also the
    /// integrator's recording interval.
    pub eta: f64,
    /// Ascent radius.
    pub rho: f64,
    /// Monte-Carlo draws per expectation evaluation.
    pub mc_samples: usize,
    /// Eigenvalue clamp tolerance for assembled covariances.
    pub clamp_tol: f64,
    /// Floor for gradient norms appearing in denominators.
    pub eps_floor: f64,
    /// Integrator substeps per recording interval (`dt = eta / substeps`).
    pub substeps: usize,
    /// Perturbation scale for the RSAM drift ODE.
    pub rsam_sigma: f64,
}

impl SdeConfig {
    pub fn new(eta: f64, rho: f64) -> Self {
        SdeConfig {
            eta,
            rho,
            mc_samples: 64,
            clamp_tol: 1e-8,
            eps_floor: 1e-12,
            substeps: 1,
            rsam_sigma: 0.0,
        }
    }

    fn validate(&self) -> Result<(), CoreError> {
        if !(self.eta > 0.0) {
            return Err(CoreError::invalid("eta must be positive"));
        }
        if self.rho < 0.0 {
            return Err(CoreError::invalid("rho must be non-negative"));
        }
        if self.mc_samples < 1 {
            return Err(CoreError::invalid("mc_samples must be at least 1"));
        }
        if self.substeps < 1 {
            return Err(CoreError::invalid("substeps must be at least 1"));
        }
        Ok(())
    }
}

/// One SDE model bound to a loss and an oracle.
pub struct SdeSystem<'a> {
    variant: SdeVariant,
    model: &'a dyn LossModel,
    oracle: GradOracle,
    cfg: SdeConfig,
}

/// Builds the drift/diffusion pair for `variant`.
///
/// The simplified and DNSAM variants assume constant gradient-noise
/// covariance, so they require an additive-Gaussian oracle.
pub fn build_sde<'a>(
    variant: SdeVariant,
    model: &'a dyn LossModel,
    oracle: GradOracle,
    cfg: SdeConfig,
) -> Result<SdeSystem<'a>, CoreError> {
    cfg.validate()?;
    if variant.needs_additive_noise() && !matches!(oracle, GradOracle::AdditiveGaussian { .. }) {
        return Err(CoreError::invalid(format!(
            "{} assumes constant gradient-noise covariance; use an additive Gaussian oracle",
            variant.name()
        )));
    }
    Ok(SdeSystem {
        variant,
        model,
        oracle,
        cfg,
    })
}

/// A batch of fresh oracle draws at one point, with whatever per-draw
/// curvature products the variant needs.
struct DrawBatch {
    /// Sampled gradients `g_s`.
    grads: Vec<Vector>,
    /// Per-draw vectors `q_s` entering the cross-covariance (for the general
    /// variants) or the normalized gradients `u_s` (for SAM simplified).
    paired: Vec<Vector>,
}

impl DrawBatch {
    fn mean_paired(&self, d: usize) -> Vector {
        let mut m = Vector::zeros(d);
        for q in &self.paired {
            m += q;
        }
        m / self.paired.len() as f64
    }

    /// Unbiased estimator of `E[(grad f - g)(E[q] - q)^T]`.
    fn cross_covariance(&self, full_grad: &Vector) -> Matrix {
        let d = full_grad.len();
        let s = self.grads.len();
        let q_bar = self.mean_paired(d);
        let mut acc = Matrix::zeros(d, d);
        for (g, q) in self.grads.iter().zip(&self.paired) {
            let a = full_grad - g;
            let b = &q_bar - q;
            acc += a * b.transpose();
        }
        if s > 1 {
            acc / (s - 1) as f64
        } else {
            acc
        }
    }

    /// Known-mean estimator of the SGD noise covariance
    /// `E[(grad f - g)(grad f - g)^T]`.
    fn sgd_covariance(&self, full_grad: &Vector) -> Matrix {
        let d = full_grad.len();
        let mut acc = Matrix::zeros(d, d);
        for g in &self.grads {
            let a = full_grad - g;
            acc += &a * a.transpose();
        }
        acc / self.grads.len() as f64
    }
}

enum Paired {
    /// `q_s = hess f_gamma(x) g_s`
    CurvatureTimesGrad,
    /// `q_s = hess f_gamma(x) g_s / max(||g_s||, eps)`
    CurvatureTimesUnit,
    /// `q_s = g_s / max(||g_s||, eps)`
    Unit,
    None,
}

impl<'a> SdeSystem<'a> {
    pub fn dim(&self) -> usize {
        self.model.dim()
    }

    pub fn variant(&self) -> SdeVariant {
        self.variant
    }

    pub fn config(&self) -> &SdeConfig {
        &self.cfg
    }

    pub fn model(&self) -> &'a dyn LossModel {
        self.model
    }

    pub fn oracle(&self) -> &GradOracle {
        &self.oracle
    }

    fn draw_batch(
        &self,
        x: &Vector,
        paired: Paired,
        rng: &mut RngStream,
    ) -> Result<DrawBatch, CoreError> {
        let s = self.cfg.mc_samples;
        let eps = self.cfg.eps_floor;
        // additive noise leaves the Hessian deterministic, so hoist it out of
        // the per-draw loop
        let hoisted_hessian = match (&self.oracle, &paired) {
            (
                GradOracle::AdditiveGaussian { .. },
                Paired::CurvatureTimesGrad | Paired::CurvatureTimesUnit,
            ) => Some(self.model.hessian(x)),
            _ => None,
        };
        let mut grads = Vec::with_capacity(s);
        let mut pairs = Vec::with_capacity(s);
        for _ in 0..s {
            let draw = self.oracle.draw(self.model, x, rng)?;
            let q = match paired {
                Paired::CurvatureTimesGrad | Paired::CurvatureTimesUnit => {
                    let hg = match &hoisted_hessian {
                        Some(h) => h.mul_vec(&draw.grad),
                        None => self.oracle.hvp_at(self.model, &draw, x, &draw.grad)?,
                    };
                    if matches!(paired, Paired::CurvatureTimesUnit) {
                        hg / draw.grad.norm().max(eps)
                    } else {
                        hg
                    }
                }
                Paired::Unit => &draw.grad / draw.grad.norm().max(eps),
                Paired::None => Vector::zeros(0),
            };
            grads.push(draw.grad);
            pairs.push(q);
        }
        Ok(DrawBatch {
            grads,
            paired: pairs,
        })
    }

    /// Drift `b(x)`.
    pub fn drift(&self, x: &Vector, rng: &mut RngStream) -> Result<Vector, CoreError> {
        let rho = self.cfg.rho;
        match self.variant {
            SdeVariant::Sgd => Ok(-self.model.grad(x)),
            SdeVariant::UsamSimplified => {
                let g = self.model.grad(x);
                let h = self.model.hessian(x);
                Ok(-(&g + rho * h.mul_vec(&g)))
            }
            SdeVariant::Dnsam => {
                let g = self.model.grad(x);
                let h = self.model.hessian(x);
                let amp = rho / g.norm().max(self.cfg.eps_floor);
                Ok(-(&g + amp * h.mul_vec(&g)))
            }
            SdeVariant::UsamGeneral => {
                let batch = self.draw_batch(x, Paired::CurvatureTimesGrad, rng)?;
                let correction = batch.mean_paired(self.dim());
                Ok(-(self.model.grad(x) + rho * correction))
            }
            SdeVariant::SamGeneral => {
                let batch = self.draw_batch(x, Paired::CurvatureTimesUnit, rng)?;
                let correction = batch.mean_paired(self.dim());
                Ok(-(self.model.grad(x) + rho * correction))
            }
            SdeVariant::SamSimplified => {
                let batch = self.draw_batch(x, Paired::Unit, rng)?;
                let u_bar = batch.mean_paired(self.dim());
                let h = self.model.hessian(x);
                Ok(-(self.model.grad(x) + rho * h.mul_vec(&u_bar)))
            }
            SdeVariant::RsamDriftOde => {
                let g = self.model.grad(x);
                let sig2 = self.cfg.rsam_sigma * self.cfg.rsam_sigma;
                Ok(-(g + (sig2 / 2.0) * self.grad_hessian_trace(x)))
            }
        }
    }

    /// gradient of `Tr hess f` by central differences of the Hessian trace
    fn grad_hessian_trace(&self, x: &Vector) -> Vector {
        let d = self.dim();
        let mut g = Vector::zeros(d);
        let mut xp = x.clone();
        for i in 0..d {
            let h = 1e-4 * x[i].abs().max(1.0);
            let orig = x[i];
            xp[i] = orig + h;
            let tp = self.model.hessian(&xp).trace();
            xp[i] = orig - h;
            let tm = self.model.hessian(&xp).trace();
            xp[i] = orig;
            g[i] = (tp - tm) / (2.0 * h);
        }
        g
    }

    /// Diffusion coefficient `sigma(x)`, `sqrt(eta)` included.
    pub fn diffusion_sqrt(&self, x: &Vector, rng: &mut RngStream) -> Result<Matrix, CoreError> {
        let d = self.dim();
        let rho = self.cfg.rho;
        let sqrt_eta = self.cfg.eta.sqrt();
        match self.variant {
            SdeVariant::Sgd => match self.oracle {
                GradOracle::AdditiveGaussian { sigma } => {
                    Ok(Matrix::identity(d, d) * (sqrt_eta * sigma))
                }
                GradOracle::Minibatch { .. } => {
                    let batch = self.draw_batch(x, Paired::None, rng)?;
                    let cov = SymMatrix::from_symmetrize(batch.sgd_covariance(&self.model.grad(x)))?;
                    let root = psd_sqrt(&cov, self.cfg.clamp_tol)?;
                    Ok(root.sqrt.into_inner() * sqrt_eta)
                }
            },
            SdeVariant::UsamSimplified => {
                let sigma = self.additive_sigma();
                let h = self.model.hessian(x);
                let mut m = h.into_inner() * rho;
                for i in 0..d {
                    m[(i, i)] += 1.0;
                }
                Ok(m * (sqrt_eta * sigma))
            }
            SdeVariant::Dnsam => {
                let sigma = self.additive_sigma();
                let g = self.model.grad(x);
                let amp = rho / g.norm().max(self.cfg.eps_floor);
                let h = self.model.hessian(x);
                let mut m = h.into_inner() * amp;
                for i in 0..d {
                    m[(i, i)] += 1.0;
                }
                Ok(m * (sqrt_eta * sigma))
            }
            SdeVariant::UsamGeneral | SdeVariant::SamGeneral => {
                let paired = if self.variant == SdeVariant::UsamGeneral {
                    Paired::CurvatureTimesGrad
                } else {
                    Paired::CurvatureTimesUnit
                };
                let full_grad = self.model.grad(x);
                let batch = self.draw_batch(x, paired, rng)?;
                let sgd_cov = match self.oracle {
                    GradOracle::AdditiveGaussian { sigma } => {
                        Matrix::identity(d, d) * (sigma * sigma)
                    }
                    GradOracle::Minibatch { .. } => batch.sgd_covariance(&full_grad),
                };
                let cross = batch.cross_covariance(&full_grad);
                let total = sgd_cov + rho * (&cross + cross.transpose());
                let root = psd_sqrt(&SymMatrix::from_symmetrize(total)?, self.cfg.clamp_tol)?;
                Ok(root.sqrt.into_inner() * sqrt_eta)
            }
            SdeVariant::SamSimplified => {
                let sigma = self.additive_sigma();
                let full_grad = self.model.grad(x);
                let batch = self.draw_batch(x, Paired::Unit, rng)?;
                let cross = batch.cross_covariance(&full_grad);
                let h = self.model.hessian(x);
                let h_cross = h.matrix() * cross;
                let mut total = &h_cross + h_cross.transpose();
                total *= rho;
                for i in 0..d {
                    total[(i, i)] += sigma * sigma;
                }
                let root = psd_sqrt(&SymMatrix::from_symmetrize(total)?, self.cfg.clamp_tol)?;
                Ok(root.sqrt.into_inner() * sqrt_eta)
            }
            SdeVariant::RsamDriftOde => Ok(Matrix::zeros(d, d)),
        }
    }

    fn additive_sigma(&self) -> f64 {
        match self.oracle {
            GradOracle::AdditiveGaussian { sigma } => sigma,
            GradOracle::Minibatch { .. } => {
                unreachable!("build_sde rejects minibatch oracles for this variant")
            }
        }
    }
}

/// Monte-Carlo estimate of `E ||grad f_gamma(x)||` with its standard error.
/// This is the regularizer appearing in the SAM drift.
pub fn estimate_grad_norm_expectation(
    model: &dyn LossModel,
    oracle: &GradOracle,
    x: &Vector,
    samples: usize,
    rng: &mut RngStream,
) -> Result<(f64, f64), CoreError> {
    assert!(samples >= 2);
    let mut sum = 0.0;
    let mut sumsq = 0.0;
    for _ in 0..samples {
        let g = oracle.draw(model, x, rng)?.grad;
        let n = g.norm();
        sum += n;
        sumsq += n * n;
    }
    let mean = sum / samples as f64;
    let var = (sumsq / samples as f64 - mean * mean).max(0.0);
    let se = (var / (samples as f64 - 1.0)).sqrt();
    Ok((mean, se))
}
