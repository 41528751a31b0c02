//! Closed-form results for quadratic losses `f(x) = x^T H x / 2`.
//!
//! These serve as ground-truth oracles for the integrator and the ensemble
//! harness: the componentwise USAM flow, the stationary distribution of the
//! USAM SDE, the SAM quadratic ODE with its attractor condition, the
//! pull/push classification for DNSAM, and the stationary suboptimality
//! formula.

use crate::error::CoreError;
use crate::linalg::{sym_eigendecompose, SymMatrix, Vector};

/// Eigenvalues (descending) plus the scalar hyperparameters of the quadratic
/// analysis. Noise covariance is isotropic: `Sigma_SGD = sigma^2 I`.
#[derive(Debug, Clone)]
pub struct QuadSpec {
    /// `lambda_1 >= ... >= lambda_d`.
    pub eigvals: Vector,
    pub rho: f64,
    pub eta: f64,
    pub sigma: f64,
}

impl QuadSpec {
    pub fn new(mut eigvals: Vec<f64>, rho: f64, eta: f64, sigma: f64) -> Self {
        eigvals.sort_by(|a, b| b.partial_cmp(a).expect("finite eigenvalues"));
        QuadSpec {
            eigvals: Vector::from_vec(eigvals),
            rho,
            eta,
            sigma,
        }
    }
}

/// Largest negative eigenvalue of `H`, if any.
pub fn largest_negative_eigenvalue(h: &SymMatrix) -> Option<f64> {
    let eig = sym_eigendecompose(h);
    eig.values.iter().copied().filter(|&l| l < 0.0).fold(
        None,
        |acc: Option<f64>, l| match acc {
            Some(best) if best >= l => Some(best),
            _ => Some(l),
        },
    )
}

/// Deterministic USAM flow on the (diagonalized) quadratic:
/// `X_t^j = X_0^j exp(-lambda_j (1 + rho lambda_j) t)`.
pub fn usam_ode_solution(x0: &Vector, spec: &QuadSpec, t: f64) -> Vector {
    assert!(t >= 0.0, "t must be non-negative");
    assert_eq!(x0.len(), spec.eigvals.len());
    Vector::from_iterator(
        x0.len(),
        x0.iter()
            .zip(spec.eigvals.iter())
            .map(|(&x, &l)| x * (-l * (1.0 + spec.rho * l) * t).exp()),
    )
}

/// Radius above which the USAM flow converges to the origin even when it is a
/// saddle or a maximum: `-1/lambda_star`.
pub fn usam_saddle_threshold(lambda_star: f64) -> Result<f64, CoreError> {
    if lambda_star >= 0.0 {
        return Err(CoreError::invalid(
            "lambda_star must be a strictly negative eigenvalue",
        ));
    }
    Ok(-1.0 / lambda_star)
}

/// Stationary law of one eigendirection of the USAM SDE on a quadratic.
#[derive(Debug, Clone, Copy)]
pub struct UsamStationary {
    /// `eta sigma^2 (1 + rho lambda) / (2 lambda)`.
    pub variance: f64,
}

impl UsamStationary {
    /// Normalized Gaussian density at `x`.
    pub fn pdf(&self, x: f64) -> f64 {
        let v = self.variance;
        (-(x * x) / (2.0 * v)).exp() / (2.0 * std::f64::consts::PI * v).sqrt()
    }
}

/// Stationary variance and density for eigendirection `i`. Normalizable iff
/// `lambda_i (1 + rho lambda_i) > 0` (all-positive spectrum, or an indefinite
/// one with `rho` beyond the saddle threshold).
pub fn usam_stationary(spec: &QuadSpec, i: usize) -> Result<UsamStationary, CoreError> {
    let lambda = spec.eigvals[i];
    let coefficient = lambda * (1.0 + spec.rho * lambda);
    if coefficient <= 0.0 {
        return Err(CoreError::NonNormalizable { coefficient });
    }
    let variance = spec.eta * spec.sigma * spec.sigma * (1.0 + spec.rho * lambda) / (2.0 * lambda);
    Ok(UsamStationary { variance })
}

/// Drift of the SAM ODE on a quadratic:
/// `-H (I + rho H / max(||H x||, eps_floor)) x`.
pub fn sam_ode_drift_quad(x: &Vector, h: &SymMatrix, rho: f64, eps_floor: f64) -> Vector {
    let hx = h.mul_vec(x);
    let scale = rho / hx.norm().max(eps_floor);
    -(h.mul_vec(&(x + scale * &hx)))
}

/// True when the SAM quadratic ODE is inside its attractor at `x`:
/// everywhere for PSD `H`, and `||H x|| <= -rho lambda_star` otherwise.
pub fn sam_attractor_check(x: &Vector, h: &SymMatrix, rho: f64) -> bool {
    match largest_negative_eigenvalue(h) {
        None => true,
        Some(lambda_star) => h.mul_vec(x).norm() <= -rho * lambda_star,
    }
}

/// DNSAM behavior classification near the origin.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PullPush {
    /// `||H x|| < epsilon`: the volatility spike dominates and the dynamics is
    /// pushed away from the origin.
    Pushed,
    /// `||H x||` inside `(epsilon, -rho lambda_star)` (or `(epsilon, inf)` for
    /// PSD `H`): attracted toward the origin.
    Pulled,
    /// Beyond the attractor radius.
    Outside,
}

pub fn dnsam_pull_push_classify(x: &Vector, h: &SymMatrix, rho: f64, epsilon: f64) -> PullPush {
    assert!(epsilon > 0.0, "epsilon must be positive");
    let r = h.mul_vec(x).norm();
    if r < epsilon {
        return PullPush::Pushed;
    }
    match largest_negative_eigenvalue(h) {
        None => PullPush::Pulled,
        Some(lambda_star) => {
            if r < -rho * lambda_star {
                PullPush::Pulled
            } else {
                PullPush::Outside
            }
        }
    }
}

/// Expected loss under the stationary distribution when the gradient noise
/// covariance matches the curvature (`Sigma_SGD = H`):
/// `(eta/4) (Tr H + 2 rho Tr H^2 + rho^2 Tr H^3)`.
pub fn usam_suboptimality(h: &SymMatrix, rho: f64, eta: f64) -> Result<f64, CoreError> {
    let eig = sym_eigendecompose(h);
    let min = eig.values[eig.values.len() - 1];
    if min < -1e-12 {
        return Err(CoreError::invalid(format!(
            "H must be positive semi-definite (min eigenvalue {min:.3e})"
        )));
    }
    let (mut t1, mut t2, mut t3) = (0.0, 0.0, 0.0);
    for &l in eig.values.iter() {
        t1 += l;
        t2 += l * l;
        t3 += l * l * l;
    }
    Ok(eta / 4.0 * (t1 + 2.0 * rho * t2 + rho * rho * t3))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{quadratic_model, GradOracle};
    use crate::optim::{step, OptVariant, OptimizerSpec};
    use crate::rng::RngStream;

    fn saddle_2d() -> SymMatrix {
        SymMatrix::from_diagonal(&Vector::from_vec(vec![1.0, -1.0]))
    }

    #[test]
    fn ode_solution_reduces_to_gradient_flow_at_rho_zero() {
        let spec = QuadSpec::new(vec![2.0, 0.5, -1.0], 0.0, 0.01, 0.0);
        let x0 = Vector::from_vec(vec![1.0, -1.0, 2.0]);
        let got = usam_ode_solution(&x0, &spec, 1.5);
        for j in 0..3 {
            let expect = x0[j] * (-spec.eigvals[j] * 1.5).exp();
            assert!((got[j] - expect).abs() < 1e-14);
        }
    }

    #[test]
    fn ode_solution_decays_toward_saddle_when_rho_exceeds_threshold() {
        // lambda = -1, rho = 2 > threshold 1: exponent -(-1)(1 - 2) = -1
        let spec = QuadSpec::new(vec![-1.0], 2.0, 0.01, 0.0);
        let x0 = Vector::from_vec(vec![1.0]);
        let got = usam_ode_solution(&x0, &spec, 1.0);
        assert!((got[0] - (-1.0f64).exp()).abs() < 1e-14);
    }

    #[test]
    fn ode_solution_matches_rk4_integration() {
        // small version of the acceptance check: mixed spectrum, t = 2
        let eigs = vec![1.8, 0.9, 0.2, -0.4, -1.1];
        let rho = 0.3;
        let spec = QuadSpec::new(eigs.clone(), rho, 0.01, 0.0);
        let x0 = Vector::from_vec(vec![1.0, -0.5, 0.25, 0.7, -0.3]);
        // rates sorted to match the descending QuadSpec order
        let rate: Vec<f64> = spec
            .eigvals
            .iter()
            .map(|&l| -l * (1.0 + rho * l))
            .collect();
        let f = |x: &Vector| Vector::from_iterator(5, x.iter().zip(&rate).map(|(&v, &r)| r * v));
        let mut x = x0.clone();
        let h = 1e-3;
        let steps = 2000;
        for _ in 0..steps {
            let k1 = f(&x);
            let k2 = f(&(&x + (h / 2.0) * &k1));
            let k3 = f(&(&x + (h / 2.0) * &k2));
            let k4 = f(&(&x + h * &k3));
            x += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        let exact = usam_ode_solution(&x0, &spec, h * steps as f64);
        assert!((x - exact).amax() < 1e-6);
    }

    #[test]
    fn ode_residual_matches_finite_difference_in_time() {
        let spec = QuadSpec::new(vec![1.5, -0.7], 0.2, 0.01, 0.0);
        let x0 = Vector::from_vec(vec![0.8, 0.6]);
        let (t, dt) = (0.9, 1e-4);
        let plus = usam_ode_solution(&x0, &spec, t + dt);
        let minus = usam_ode_solution(&x0, &spec, t - dt);
        let xt = usam_ode_solution(&x0, &spec, t);
        for j in 0..2 {
            let fd = (plus[j] - minus[j]) / (2.0 * dt);
            let rhs = -spec.eigvals[j] * (1.0 + spec.rho * spec.eigvals[j]) * xt[j];
            assert!((fd - rhs).abs() < 1e-6);
        }
    }

    #[test]
    fn usam_flow_beats_gradient_flow_on_positive_directions() {
        for &lambda in &[0.3f64, 1.0, 2.5] {
            for &rho in &[0.01f64, 0.1, 1.0] {
                for &t in &[0.1f64, 1.0, 10.0] {
                    let usam = (-lambda * (1.0 + rho * lambda) * t).exp();
                    let flow = (-lambda * t).exp();
                    assert!(usam < flow);
                }
            }
        }
    }

    #[test]
    fn saddle_threshold_values_and_rejection() {
        assert_eq!(usam_saddle_threshold(-1.0).unwrap(), 1.0);
        assert_eq!(usam_saddle_threshold(-0.5).unwrap(), 2.0);
        assert!(usam_saddle_threshold(0.0).is_err());
        assert!(usam_saddle_threshold(0.3).is_err());
    }

    #[test]
    fn discrete_usam_confirms_threshold_sides() {
        let model = quadratic_model(saddle_2d());
        let oracle = GradOracle::AdditiveGaussian { sigma: 0.0 };
        let threshold = usam_saddle_threshold(-1.0).unwrap();

        let converging = OptimizerSpec::new(OptVariant::Usam, 0.01, 1.5 * threshold);
        let mut x = Vector::from_vec(vec![0.01, 0.01]);
        let mut rng = RngStream::new(0, 0);
        for _ in 0..5000 {
            x = step(&converging, &model, &oracle, &x, &mut rng).unwrap();
        }
        assert!(x.norm() < 1e-8, "should converge to the saddle, at {x:?}");

        let escaping = OptimizerSpec::new(OptVariant::Usam, 0.01, 0.5 * threshold);
        let mut x = Vector::from_vec(vec![0.01, 0.01]);
        for _ in 0..5000 {
            x = step(&escaping, &model, &oracle, &x, &mut rng).unwrap();
        }
        assert!(
            x[1].abs() > 1.0,
            "should escape along the negative eigendirection, at {x:?}"
        );
    }

    #[test]
    fn stationary_variance_trivial_cases() {
        // classic OU: rho = 0, lambda = 1, eta = 1e-3, sigma = 1
        let s = usam_stationary(&QuadSpec::new(vec![1.0], 0.0, 1e-3, 1.0), 0).unwrap();
        assert!((s.variance - 5e-4).abs() < 1e-18);
        // stated-formula arithmetic
        let s = usam_stationary(&QuadSpec::new(vec![1.0], 1.0, 0.01, 0.01), 0).unwrap();
        assert!((s.variance - 1e-6).abs() < 1e-20);
    }

    #[test]
    fn stationary_rejects_non_normalizable_direction() {
        // lambda < 0 with rho below the threshold
        let spec = QuadSpec::new(vec![-1.0], 0.5, 0.01, 1.0);
        assert!(matches!(
            usam_stationary(&spec, 0),
            Err(CoreError::NonNormalizable { .. })
        ));
        // beyond the threshold the law exists again
        let spec = QuadSpec::new(vec![-1.0], 2.0, 0.01, 1.0);
        let s = usam_stationary(&spec, 0).unwrap();
        assert!(s.variance > 0.0);
    }

    fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
        fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> f64 {
            (b - a) / 6.0 * (f(a) + 4.0 * f(0.5 * (a + b)) + f(b))
        }
        let whole = simpson(f, a, b);
        let m = 0.5 * (a + b);
        let halves = simpson(f, a, m) + simpson(f, m, b);
        if depth == 0 || (halves - whole).abs() < 15.0 * tol {
            halves + (halves - whole) / 15.0
        } else {
            adaptive_simpson(f, a, m, tol / 2.0, depth - 1)
                + adaptive_simpson(f, m, b, tol / 2.0, depth - 1)
        }
    }

    #[test]
    fn stationary_pdf_integrates_to_one() {
        for (eigs, rho) in [(vec![1.0], 0.5), (vec![0.3], 0.0), (vec![-0.8], 2.0)] {
            let spec = QuadSpec::new(eigs, rho, 0.01, 0.5);
            let s = usam_stationary(&spec, 0).unwrap();
            let sd = s.variance.sqrt();
            let integral = adaptive_simpson(&|x| s.pdf(x), -8.0 * sd, 8.0 * sd, 1e-10, 30);
            assert!((integral - 1.0).abs() < 1e-8, "integral {integral}");
        }
    }

    #[test]
    fn sam_drift_equals_usam_drift_at_unit_gradient_norm() {
        let h = saddle_2d();
        let rho = 0.25;
        // ||H x|| = 1 here
        let x = Vector::from_vec(vec![0.6, 0.8]);
        assert!((h.mul_vec(&x).norm() - 1.0).abs() < 1e-12);
        let sam = sam_ode_drift_quad(&x, &h, rho, 1e-12);
        let usam = -(h.mul_vec(&(&x + rho * h.mul_vec(&x))));
        assert!((sam - usam).norm() < 1e-14);
    }

    #[test]
    fn sam_drift_fixed_point_at_origin() {
        let d = sam_ode_drift_quad(&Vector::zeros(2), &saddle_2d(), 0.1, 1e-12);
        assert_eq!(d.norm(), 0.0);
    }

    #[test]
    fn sam_drift_lyapunov_derivative_nonpositive_inside_attractor() {
        let h = saddle_2d();
        let rho = 0.1;
        // ||H x|| = 0.05 < rho
        let x = Vector::from_vec(vec![0.03, 0.04]);
        assert!((h.mul_vec(&x).norm() - 0.05).abs() < 1e-15);
        assert!(sam_attractor_check(&x, &h, rho));
        // V = ||x||^2 / 2, V-dot = <x, drift>, also expressible as
        // -sum_i lambda_i (1 + rho lambda_i / ||Hx||) x_i^2
        let drift = sam_ode_drift_quad(&x, &h, rho, 1e-12);
        let vdot = x.dot(&drift);
        let n = h.mul_vec(&x).norm();
        let explicit: f64 = -(1.0 * (1.0 + rho * 1.0 / n) * x[0] * x[0]
            + (-1.0) * (1.0 - rho / n) * x[1] * x[1]);
        assert!((vdot - explicit).abs() < 1e-14);
        assert!(vdot <= 0.0);
    }

    #[test]
    fn attractor_check_branches() {
        let psd = SymMatrix::from_diagonal(&Vector::from_vec(vec![2.0, 0.1]));
        assert!(sam_attractor_check(
            &Vector::from_vec(vec![100.0, -50.0]),
            &psd,
            0.3
        ));

        let h = saddle_2d();
        assert!(sam_attractor_check(
            &Vector::from_vec(vec![0.0, 0.05]),
            &h,
            0.1
        ));
        assert!(!sam_attractor_check(
            &Vector::from_vec(vec![0.0, 0.2]),
            &h,
            0.1
        ));
    }

    #[test]
    fn full_batch_sam_escapes_from_outside_the_attractor() {
        let h = saddle_2d();
        let model = quadratic_model(h.clone());
        let oracle = GradOracle::AdditiveGaussian { sigma: 0.0 };
        let spec = OptimizerSpec::new(OptVariant::Sam, 1e-3, 0.1);
        let mut x = Vector::from_vec(vec![0.0, 0.2]);
        let mut rng = RngStream::new(0, 0);
        for _ in 0..20_000 {
            x = step(&spec, &model, &oracle, &x, &mut rng).unwrap();
        }
        assert!(x.norm() > 1.0, "should leave the origin, at {x:?}");
    }

    #[test]
    fn pull_push_classification_intervals() {
        let h = saddle_2d();
        let rho = 0.1;
        let eps = 0.01;
        // ||Hx|| = eps/2: pushed
        let x = Vector::from_vec(vec![0.0, eps / 2.0]);
        assert_eq!(dnsam_pull_push_classify(&x, &h, rho, eps), PullPush::Pushed);
        // between eps and rho |lambda_star| = 0.1: pulled
        let x = Vector::from_vec(vec![0.0, 0.05]);
        assert_eq!(dnsam_pull_push_classify(&x, &h, rho, eps), PullPush::Pulled);
        // beyond: outside
        let x = Vector::from_vec(vec![0.0, 0.5]);
        assert_eq!(
            dnsam_pull_push_classify(&x, &h, rho, eps),
            PullPush::Outside
        );
        // PSD branch: pulled at any radius above eps
        let psd = SymMatrix::identity(2);
        let x = Vector::from_vec(vec![10.0 * eps, 0.0]);
        assert_eq!(
            dnsam_pull_push_classify(&x, &psd, rho, eps),
            PullPush::Pulled
        );
    }

    #[test]
    fn suboptimality_trivial_values_and_rejection() {
        let d = 6;
        let v = usam_suboptimality(&SymMatrix::identity(d), 0.0, 0.02).unwrap();
        assert!((v - 0.02 * d as f64 / 4.0).abs() < 1e-15);

        let h1 = SymMatrix::from_diagonal(&Vector::from_vec(vec![1.0]));
        let v = usam_suboptimality(&h1, 1.0, 0.01).unwrap();
        assert!((v - 0.01).abs() < 1e-15);

        assert!(usam_suboptimality(&saddle_2d(), 0.1, 0.01).is_err());
    }

    #[test]
    fn sam_effective_radius_versus_usam() {
        // the SAM scalar rho/||Hx|| is below rho when ||Hx|| > 1, above when
        // ||Hx|| < 1
        let h = SymMatrix::identity(2);
        let rho = 0.2;
        for (scale, larger) in [(3.0, false), (0.25, true)] {
            let x = Vector::from_vec(vec![scale, 0.0]);
            let n = h.mul_vec(&x).norm();
            let effective = rho / n;
            assert_eq!(effective > rho, larger);
        }
    }
}
