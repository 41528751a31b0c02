//! Euler–Maruyama integration aligned with the discrete iteration clock.
//!
//! The recording interval equals the learning rate `eta`, so trajectory entry
//! `k` approximates `X_{k eta}` and is directly comparable with iterate `x_k`
//! of the discrete algorithm. An optional substep factor refines the
//! integration grid without changing the recording times.

use crate::error::CoreError;
use crate::linalg::{Matrix, Vector};
use crate::rng::RngStream;

use super::SdeSystem;

/// One Euler–Maruyama update per substep:
/// `x += b(x) dt + sigma(x) sqrt(dt) w`, `w` standard normal.
struct EmState {
    x: Vector,
    drift: Vector,
    diffusion: Matrix,
    w: Vector,
    noise: Vector,
}

/// Streams the trajectory through `observer(k, x_k)` for `k = 0..=steps`
/// without storing it. A non-finite state yields a divergence error carrying
/// the recording index at which it appeared; callers reproducing escape
/// experiments treat that as data.
pub fn em_stream(
    sys: &SdeSystem,
    x0: &Vector,
    steps: usize,
    rng: &mut RngStream,
    mut observer: impl FnMut(usize, &Vector),
) -> Result<(), CoreError> {
    assert!(steps >= 1, "steps must be at least 1");
    let d = sys.dim();
    assert_eq!(x0.len(), d, "x0 dimension mismatch");
    let cfg = *sys.config();
    let dt = cfg.eta / cfg.substeps as f64;
    let sqrt_dt = dt.sqrt();

    let mut st = EmState {
        x: x0.clone(),
        drift: Vector::zeros(d),
        diffusion: Matrix::zeros(d, d),
        w: Vector::zeros(d),
        noise: Vector::zeros(d),
    };

    if st.x.iter().any(|v| !v.is_finite()) {
        return Err(CoreError::Divergence { step: 0 });
    }
    observer(0, &st.x);

    for k in 1..=steps {
        for _ in 0..cfg.substeps {
            st.drift.copy_from(&sys.drift(&st.x, rng)?);
            st.diffusion.copy_from(&sys.diffusion_sqrt(&st.x, rng)?);
            rng.fill_standard_normal(st.w.as_mut_slice());
            st.noise.gemv(sqrt_dt, &st.diffusion, &st.w, 0.0);
            st.x.axpy(dt, &st.drift, 1.0);
            st.x += &st.noise;
        }
        if st.x.iter().any(|v| !v.is_finite()) {
            return Err(CoreError::Divergence { step: k });
        }
        observer(k, &st.x);
    }
    Ok(())
}

/// Integrates and returns the recorded trajectory `[x_0, ..., x_steps]`.
pub fn em_integrate(
    sys: &SdeSystem,
    x0: &Vector,
    steps: usize,
    rng: &mut RngStream,
) -> Result<Vec<Vector>, CoreError> {
    let mut path = Vec::with_capacity(steps + 1);
    em_stream(sys, x0, steps, rng, |_, x| path.push(x.clone()))?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::SymMatrix;
    use crate::models::{quadratic_model, GradOracle};
    use crate::sde::{build_sde, SdeConfig, SdeVariant};

    #[test]
    fn zero_drift_zero_diffusion_is_constant() {
        // RSAM drift ODE with sigma = 0 on a critical point: stays put
        let model = quadratic_model(SymMatrix::identity(2));
        let cfg = SdeConfig::new(0.1, 0.0);
        let sys = build_sde(
            SdeVariant::RsamDriftOde,
            &model,
            GradOracle::AdditiveGaussian { sigma: 0.0 },
            cfg,
        )
        .unwrap();
        let mut rng = RngStream::new(0, 0);
        let path = em_integrate(&sys, &Vector::zeros(2), 10, &mut rng).unwrap();
        assert_eq!(path.len(), 11);
        assert!(path.iter().all(|x| x.norm() == 0.0));
    }

    #[test]
    fn ou_tail_variance_matches_stationary_value() {
        // 1-d OU via the SGD SDE on f = x^2/2 with unit noise:
        // drift -x, diffusion sqrt(eta); stationary variance eta/2
        let eta = 1e-3;
        let model = quadratic_model(SymMatrix::identity(1));
        let cfg = SdeConfig::new(eta, 0.0);
        let sys = build_sde(
            SdeVariant::Sgd,
            &model,
            GradOracle::AdditiveGaussian { sigma: 1.0 },
            cfg,
        )
        .unwrap();
        let mut rng = RngStream::new(2718, 0);
        let steps = 1_000_000usize;
        let burn = 10_000usize;
        let mut count = 0.0;
        let mut sumsq = 0.0;
        em_stream(&sys, &Vector::zeros(1), steps, &mut rng, |k, x| {
            if k > burn {
                count += 1.0;
                sumsq += x[0] * x[0];
            }
        })
        .unwrap();
        let variance = sumsq / count;
        let expect = eta / 2.0;
        assert!(
            (variance - expect).abs() < 0.05 * expect,
            "variance {variance} vs {expect}"
        );
    }

    #[test]
    fn deterministic_euler_tracks_gradient_flow() {
        // lambda = 1, sigma = 0: x_k vs e^{-k eta} x0, global error O(eta)
        let eta = 1e-3;
        let model = quadratic_model(SymMatrix::identity(1));
        let cfg = SdeConfig::new(eta, 0.0);
        let sys = build_sde(
            SdeVariant::Sgd,
            &model,
            GradOracle::AdditiveGaussian { sigma: 0.0 },
            cfg,
        )
        .unwrap();
        let mut rng = RngStream::new(0, 0);
        let x0 = Vector::from_vec(vec![1.0]);
        let steps = 1000; // t = 1
        let path = em_integrate(&sys, &x0, steps, &mut rng).unwrap();
        for (k, x) in path.iter().enumerate() {
            let t = k as f64 * eta;
            let exact = (-t).exp();
            let bound = 5.0 * eta * t * 1.0 * 1.0; // 5 eta lambda^2 t ||x0||
            assert!(
                (x[0] - exact).abs() <= bound.max(1e-12),
                "step {k}: {} vs {exact}",
                x[0]
            );
        }
    }

    #[test]
    fn divergence_is_reported_with_step_index() {
        // expanding direction: f = -x^2/2 so drift = +x; growth overflows
        let h = SymMatrix::from_diagonal(&Vector::from_vec(vec![-1.0]));
        let model = quadratic_model(h);
        let mut cfg = SdeConfig::new(0.9, 0.0);
        cfg.substeps = 1;
        let sys = build_sde(
            SdeVariant::Sgd,
            &model,
            GradOracle::AdditiveGaussian { sigma: 0.0 },
            cfg,
        )
        .unwrap();
        let mut rng = RngStream::new(0, 0);
        let x0 = Vector::from_vec(vec![1e300]);
        match em_integrate(&sys, &x0, 50, &mut rng) {
            Err(CoreError::Divergence { step }) => assert!(step > 0 && step <= 50),
            other => panic!("expected divergence, got {:?}", other.map(|p| p.len())),
        }
    }

    #[test]
    fn substeps_preserve_recording_times() {
        let eta = 0.01;
        let model = quadratic_model(SymMatrix::identity(1));
        let mut cfg = SdeConfig::new(eta, 0.0);
        cfg.substeps = 4;
        let sys = build_sde(
            SdeVariant::Sgd,
            &model,
            GradOracle::AdditiveGaussian { sigma: 0.0 },
            cfg,
        )
        .unwrap();
        let mut rng = RngStream::new(0, 0);
        let path = em_integrate(&sys, &Vector::from_vec(vec![1.0]), 100, &mut rng).unwrap();
        assert_eq!(path.len(), 101);
        // finer grid: closer to the exact flow than the coarse grid bound
        let exact = (-1.0f64).exp();
        assert!((path[100][0] - exact).abs() < 2.0 * eta / 4.0);
    }
}
