//! Discrete-time update rules.
//!
//! The plain variants (SGD, SAM, USAM, DNSAM) draw one stochastic gradient per
//! step and reuse the same realization for the ascent and descent evaluations.
//! The perturbed variants (PGD, PSAM, PUSAM, PDNSAM) evaluate full gradients
//! and inject the oracle's noise `Z` explicitly, adding `eta * Z` after the
//! descent step. RSAM averages full gradients over Gaussian parameter
//! perturbations.

use crate::error::CoreError;
use crate::linalg::Vector;
use crate::models::{GradOracle, LossModel};
use crate::rng::RngStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OptVariant {
    Sgd,
    Sam,
    Usam,
    Dnsam,
    Pgd,
    Psam,
    Pusam,
    Pdnsam,
    Rsam,
}

impl OptVariant {
    pub const ALL: [OptVariant; 9] = [
        OptVariant::Sgd,
        OptVariant::Sam,
        OptVariant::Usam,
        OptVariant::Dnsam,
        OptVariant::Pgd,
        OptVariant::Psam,
        OptVariant::Pusam,
        OptVariant::Pdnsam,
        OptVariant::Rsam,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            OptVariant::Sgd => "sgd",
            OptVariant::Sam => "sam",
            OptVariant::Usam => "usam",
            OptVariant::Dnsam => "dnsam",
            OptVariant::Pgd => "pgd",
            OptVariant::Psam => "psam",
            OptVariant::Pusam => "pusam",
            OptVariant::Pdnsam => "pdnsam",
            OptVariant::Rsam => "rsam",
        }
    }
}

/// Update variant plus hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerSpec {
    pub variant: OptVariant,
    /// Step size, > 0.
    pub eta: f64,
    /// Ascent radius, >= 0.
    pub rho: f64,
    /// Floor applied to gradient norms before dividing, > 0.
    pub eps_floor: f64,
    /// Monte-Carlo sample count for the RSAM expectation, >= 1.
    pub rsam_samples: usize,
    /// Standard deviation of the RSAM parameter perturbation.
    pub rsam_sigma: f64,
}

impl OptimizerSpec {
    pub fn new(variant: OptVariant, eta: f64, rho: f64) -> Self {
        OptimizerSpec {
            variant,
            eta,
            rho,
            eps_floor: 1e-12,
            rsam_samples: 8,
            rsam_sigma: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), CoreError> {
        if !(self.eta > 0.0) {
            return Err(CoreError::invalid("eta must be positive"));
        }
        if self.rho < 0.0 {
            return Err(CoreError::invalid("rho must be non-negative"));
        }
        if !(self.eps_floor > 0.0) {
            return Err(CoreError::invalid("eps_floor must be positive"));
        }
        if self.rsam_samples < 1 {
            return Err(CoreError::invalid("rsam_samples must be at least 1"));
        }
        Ok(())
    }
}

fn floored_norm(v: &Vector, eps: f64) -> f64 {
    v.norm().max(eps)
}

/// One update step. Pure in `(x, rng state)`; trajectory-level parallelism
/// happens in the harness.
pub fn step(
    spec: &OptimizerSpec,
    model: &dyn LossModel,
    oracle: &GradOracle,
    x: &Vector,
    rng: &mut RngStream,
) -> Result<Vector, CoreError> {
    let eta = spec.eta;
    let rho = spec.rho;
    match spec.variant {
        OptVariant::Sgd => {
            let draw = oracle.draw(model, x, rng)?;
            Ok(x - eta * draw.grad)
        }
        OptVariant::Sam => {
            let draw = oracle.draw(model, x, rng)?;
            let scale = rho / floored_norm(&draw.grad, spec.eps_floor);
            let ascent = x + scale * &draw.grad;
            let g = oracle.grad_at(model, &draw, &ascent)?;
            Ok(x - eta * g)
        }
        OptVariant::Usam => {
            let draw = oracle.draw(model, x, rng)?;
            let ascent = x + rho * &draw.grad;
            let g = oracle.grad_at(model, &draw, &ascent)?;
            Ok(x - eta * g)
        }
        OptVariant::Dnsam => {
            // the normalization uses the full gradient, the direction the
            // sampled one
            let draw = oracle.draw(model, x, rng)?;
            let scale = rho / floored_norm(&model.grad(x), spec.eps_floor);
            let ascent = x + scale * &draw.grad;
            let g = oracle.grad_at(model, &draw, &ascent)?;
            Ok(x - eta * g)
        }
        OptVariant::Pgd => {
            let full = model.grad(x);
            let draw = oracle.draw(model, x, rng)?;
            let z = oracle.noise_of(&full, &draw);
            Ok(x - eta * full + eta * z)
        }
        OptVariant::Psam => {
            let full = model.grad(x);
            let draw = oracle.draw(model, x, rng)?;
            let z = oracle.noise_of(&full, &draw);
            let scale = rho / floored_norm(&draw.grad, spec.eps_floor);
            let ascent = x + scale * &draw.grad;
            Ok(x - eta * model.grad(&ascent) + eta * z)
        }
        OptVariant::Pusam => {
            let full = model.grad(x);
            let draw = oracle.draw(model, x, rng)?;
            let z = oracle.noise_of(&full, &draw);
            let ascent = x + rho * &draw.grad;
            Ok(x - eta * model.grad(&ascent) + eta * z)
        }
        OptVariant::Pdnsam => {
            let full = model.grad(x);
            let draw = oracle.draw(model, x, rng)?;
            let z = oracle.noise_of(&full, &draw);
            let scale = rho / floored_norm(&full, spec.eps_floor);
            let ascent = x + scale * &draw.grad;
            Ok(x - eta * model.grad(&ascent) + eta * z)
        }
        OptVariant::Rsam => {
            let mut mean = Vector::zeros(x.len());
            let mut perturbed = x.clone();
            for _ in 0..spec.rsam_samples {
                for (p, &xi) in perturbed.iter_mut().zip(x.iter()) {
                    *p = xi + spec.rsam_sigma * rng.standard_normal();
                }
                mean += model.grad(&perturbed);
            }
            mean /= spec.rsam_samples as f64;
            Ok(x - eta * mean)
        }
    }
}
