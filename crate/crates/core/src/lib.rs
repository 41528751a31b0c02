//! Library for studying sharpness-aware optimizers in discrete and continuous time.
//!
//! The crate is organized around five layers:
//!
//! - [`linalg`] / [`rng`]: dense symmetric linear algebra and reproducible,
//!   splittable Gaussian sampling,
//! - [`models`]: differentiable loss landscapes and stochastic gradient oracles,
//! - [`optim`]: the discrete update rules (SGD, SAM, USAM, DNSAM, perturbed
//!   variants, and RSAM),
//! - [`sde`]: drift/diffusion builders for the continuous-time models plus an
//!   Euler–Maruyama integrator aligned with the discrete iteration clock,
//! - [`analytic`]: closed-form results for quadratic losses (ODE solutions,
//!   stationary distributions, attractor conditions, suboptimality),
//! - [`harness`]: ensemble execution, weak-approximation error measurement, and
//!   saddle-behavior metrics (ball occupancy, escape classification).

pub mod analytic;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod models;
pub mod optim;
pub mod rng;
pub mod sde;

pub use error::CoreError;
pub use linalg::{psd_sqrt, sym_eigendecompose, Matrix, SymMatrix, Vector};
pub use rng::{gaussian_vector, RngStream};
