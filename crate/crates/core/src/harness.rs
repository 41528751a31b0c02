//! Ensemble execution and the statistics used to compare discrete algorithms
//! with their continuous-time models.
//!
//! Trajectories within an ensemble are independent: run `r` draws its stream
//! from `(base_seed, r)`, so results do not depend on execution order and the
//! rayon parallelism is bitwise deterministic. Aggregation keeps determinism
//! by reducing per-run values in run order with pairwise summation (or integer
//! counters for the occupancy metrics).

use rayon::prelude::*;

use crate::error::CoreError;
use crate::linalg::Vector;
use crate::models::{GradOracle, LossModel};
use crate::optim::{step, OptimizerSpec};
use crate::rng::RngStream;
use crate::sde::{em_stream, SdeSystem};

/// Scalar observables evaluated along trajectories.
#[derive(Debug, Clone, PartialEq)]
pub enum TestFunction {
    /// `g1(x) = ||x|| + ||grad f(x)||`
    G1,
    /// `g2(x) = f(x)`
    G2,
    /// One coordinate of the state.
    Coordinate(usize),
    /// Distance to the origin.
    Norm,
}

impl TestFunction {
    pub fn name(&self) -> String {
        match self {
            TestFunction::G1 => "g1".into(),
            TestFunction::G2 => "g2".into(),
            TestFunction::Coordinate(i) => format!("x{i}"),
            TestFunction::Norm => "norm".into(),
        }
    }

    pub fn eval(&self, model: &dyn LossModel, x: &Vector) -> f64 {
        match self {
            TestFunction::G1 => test_g1(model, x),
            TestFunction::G2 => test_g2(model, x),
            TestFunction::Coordinate(i) => x[*i],
            TestFunction::Norm => x.norm(),
        }
    }
}

pub fn test_g1(model: &dyn LossModel, x: &Vector) -> f64 {
    x.norm() + model.grad(x).norm()
}

pub fn test_g2(model: &dyn LossModel, x: &Vector) -> f64 {
    model.value(x)
}

/// Initial condition: fixed point or isotropic Gaussian of a given scale.
#[derive(Debug, Clone)]
pub enum X0 {
    Fixed(Vector),
    GaussianScale { dim: usize, scale: f64 },
}

impl X0 {
    pub fn dim(&self) -> usize {
        match self {
            X0::Fixed(v) => v.len(),
            X0::GaussianScale { dim, .. } => *dim,
        }
    }

    fn sample(&self, rng: &mut RngStream) -> Vector {
        match self {
            X0::Fixed(v) => v.clone(),
            X0::GaussianScale { dim, scale } => {
                let mut v = Vector::zeros(*dim);
                rng.fill_standard_normal(v.as_mut_slice());
                v * *scale
            }
        }
    }
}

/// Shape of one ensemble: `runs` independent trajectories of `steps` updates.
#[derive(Debug, Clone)]
pub struct EnsembleSpec {
    pub runs: usize,
    pub steps: usize,
    pub x0: X0,
    pub base_seed: u64,
}

impl EnsembleSpec {
    fn validate(&self) -> Result<(), CoreError> {
        if self.runs < 1 {
            return Err(CoreError::invalid("ensemble needs at least one run"));
        }
        if self.steps < 1 {
            return Err(CoreError::invalid("ensemble needs at least one step"));
        }
        Ok(())
    }
}

/// Either side of a weak-approximation comparison.
pub enum Dynamics<'a> {
    Discrete {
        spec: &'a OptimizerSpec,
        model: &'a dyn LossModel,
        oracle: &'a GradOracle,
    },
    Sde(&'a SdeSystem<'a>),
}

impl<'a> Dynamics<'a> {
    pub fn model(&self) -> &'a dyn LossModel {
        match self {
            Dynamics::Discrete { model, .. } => *model,
            Dynamics::Sde(sys) => sys.model(),
        }
    }

    /// Streams one trajectory through `observer(k, x_k)` for `k = 0..=steps`.
    /// Returns the divergence step if the state left the finite range;
    /// configuration-level failures propagate as errors.
    fn stream(
        &self,
        x0: &Vector,
        steps: usize,
        rng: &mut RngStream,
        mut observer: impl FnMut(usize, &Vector),
    ) -> Result<Option<usize>, CoreError> {
        match self {
            Dynamics::Discrete {
                spec,
                model,
                oracle,
            } => {
                let mut x = x0.clone();
                if x.iter().any(|v| !v.is_finite()) {
                    return Ok(Some(0));
                }
                observer(0, &x);
                for k in 1..=steps {
                    x = step(spec, *model, oracle, &x, rng)?;
                    if x.iter().any(|v| !v.is_finite()) {
                        return Ok(Some(k));
                    }
                    observer(k, &x);
                }
                Ok(None)
            }
            Dynamics::Sde(sys) => match em_stream(sys, x0, steps, rng, &mut observer) {
                Ok(()) => Ok(None),
                Err(CoreError::Divergence { step }) => Ok(Some(step)),
                Err(e) => Err(e),
            },
        }
    }
}

/// Per-iteration means and standard errors of the registered test functions.
#[derive(Debug, Clone)]
pub struct EnsembleStats {
    pub names: Vec<String>,
    pub steps: usize,
    /// `mean[g][k]`, `k = 0..=steps`. NaN only where every run had already
    /// diverged (which is then visible in `divergences`).
    pub mean: Vec<Vec<f64>>,
    /// `se[g][k]`: standard error over contributing runs.
    pub se: Vec<Vec<f64>>,
    /// Contributing runs per iteration.
    pub counts: Vec<usize>,
    /// `(run, step)` pairs where a trajectory left the finite range.
    pub divergences: Vec<(usize, usize)>,
    /// Last finite state of every run.
    pub terminal: Vec<Vector>,
}

fn pairwise_sum(v: &[f64]) -> f64 {
    match v.len() {
        0 => 0.0,
        1 => v[0],
        2 => v[0] + v[1],
        n => {
            let mid = n / 2;
            pairwise_sum(&v[..mid]) + pairwise_sum(&v[mid..])
        }
    }
}

struct RunSeries {
    /// `values[g][k]`, truncated at divergence.
    values: Vec<Vec<f64>>,
    diverged: Option<usize>,
    terminal: Vector,
}

fn run_ensemble(
    dynamics: &Dynamics,
    ens: &EnsembleSpec,
    gs: &[TestFunction],
) -> Result<EnsembleStats, CoreError> {
    ens.validate()?;
    if gs.is_empty() {
        return Err(CoreError::invalid("no test functions registered"));
    }
    let model = dynamics.model();
    let series: Vec<RunSeries> = (0..ens.runs)
        .into_par_iter()
        .map(|r| -> Result<RunSeries, CoreError> {
            let mut rng = RngStream::new(ens.base_seed, r as u64);
            let x0 = ens.x0.sample(&mut rng);
            let mut values: Vec<Vec<f64>> = gs.iter().map(|_| Vec::new()).collect();
            let mut terminal = x0.clone();
            let diverged = dynamics.stream(&x0, ens.steps, &mut rng, |_, x| {
                for (g, out) in gs.iter().zip(values.iter_mut()) {
                    out.push(g.eval(model, x));
                }
                terminal.copy_from(x);
            })?;
            Ok(RunSeries {
                values,
                diverged,
                terminal,
            })
        })
        .collect::<Result<_, _>>()?;

    let iterations = ens.steps + 1;
    let mut counts = vec![0usize; iterations];
    for s in &series {
        for k in 0..s.values[0].len() {
            counts[k] += 1;
        }
    }
    let mut mean = vec![vec![f64::NAN; iterations]; gs.len()];
    let mut se = vec![vec![f64::NAN; iterations]; gs.len()];
    let mut scratch = Vec::with_capacity(ens.runs);
    for g in 0..gs.len() {
        for k in 0..iterations {
            scratch.clear();
            for s in &series {
                if let Some(&v) = s.values[g].get(k) {
                    scratch.push(v);
                }
            }
            let n = scratch.len();
            if n == 0 {
                continue;
            }
            let m = pairwise_sum(&scratch) / n as f64;
            mean[g][k] = m;
            if n > 1 {
                let devs: Vec<f64> = scratch.iter().map(|v| (v - m) * (v - m)).collect();
                se[g][k] = (pairwise_sum(&devs) / ((n - 1) as f64 * n as f64)).sqrt();
            } else {
                se[g][k] = 0.0;
            }
        }
    }
    let divergences = series
        .iter()
        .enumerate()
        .filter_map(|(r, s)| s.diverged.map(|k| (r, k)))
        .collect();
    let terminal = series.into_iter().map(|s| s.terminal).collect();
    Ok(EnsembleStats {
        names: gs.iter().map(|g| g.name()).collect(),
        steps: ens.steps,
        mean,
        se,
        counts,
        divergences,
        terminal,
    })
}

/// `runs` independent trajectories of the discrete algorithm.
pub fn run_discrete_ensemble(
    spec: &OptimizerSpec,
    model: &dyn LossModel,
    oracle: &GradOracle,
    ens: &EnsembleSpec,
    gs: &[TestFunction],
) -> Result<EnsembleStats, CoreError> {
    spec.validate()?;
    run_ensemble(
        &Dynamics::Discrete {
            spec,
            model,
            oracle,
        },
        ens,
        gs,
    )
}

/// `runs` independent Euler–Maruyama trajectories of an SDE system.
pub fn run_sde_ensemble(
    sys: &SdeSystem,
    ens: &EnsembleSpec,
    gs: &[TestFunction],
) -> Result<EnsembleStats, CoreError> {
    run_ensemble(&Dynamics::Sde(sys), ens, gs)
}

/// The weak-approximation error statistic
/// `max_k |mean_a(k) - mean_b(k)|` for one test function, with the combined
/// standard error at the maximizing iteration.
#[derive(Debug, Clone, Copy)]
pub struct WeakError {
    pub value: f64,
    pub argmax_step: usize,
    pub combined_se: f64,
}

pub fn weak_error(a: &EnsembleStats, b: &EnsembleStats, g: &str) -> Result<WeakError, CoreError> {
    if a.steps != b.steps {
        return Err(CoreError::LengthMismatch {
            left: a.steps,
            right: b.steps,
        });
    }
    let ga = a
        .names
        .iter()
        .position(|n| n == g)
        .ok_or_else(|| CoreError::invalid(format!("test function {g:?} not in left ensemble")))?;
    let gb = b
        .names
        .iter()
        .position(|n| n == g)
        .ok_or_else(|| CoreError::invalid(format!("test function {g:?} not in right ensemble")))?;
    let mut best = WeakError {
        value: 0.0,
        argmax_step: 0,
        combined_se: (a.se[ga][0].powi(2) + b.se[gb][0].powi(2)).sqrt(),
    };
    for k in 0..=a.steps {
        let diff = (a.mean[ga][k] - b.mean[gb][k]).abs();
        if diff.is_finite() && diff > best.value {
            best = WeakError {
                value: diff,
                argmax_step: k,
                combined_se: (a.se[ga][k].powi(2) + b.se[gb][k].powi(2)).sqrt(),
            };
        }
    }
    Ok(best)
}

/// Per-iteration ball membership counts plus in/out jump events.
#[derive(Debug, Clone)]
pub struct BallOccupancy {
    pub radius: f64,
    pub runs: usize,
    /// Trajectories inside the ball at iteration `k`.
    pub inside: Vec<u32>,
    /// Indicator sign changes between `k-1` and `k` summed over trajectories
    /// (`jumps[0] = 0`).
    pub jumps: Vec<u32>,
    /// First iteration at which each trajectory entered the ball.
    pub first_entry: Vec<Option<usize>>,
    pub divergences: Vec<(usize, usize)>,
}

impl BallOccupancy {
    pub fn iterations(&self) -> usize {
        self.inside.len()
    }

    /// Fraction of trajectories that ever entered the ball.
    pub fn entry_fraction(&self) -> f64 {
        let entered = self.first_entry.iter().filter(|e| e.is_some()).count();
        entered as f64 / self.runs as f64
    }

    /// Total jump events in `[from, to)`.
    pub fn jumps_in_window(&self, from: usize, to: usize) -> u64 {
        self.jumps[from.min(self.jumps.len())..to.min(self.jumps.len())]
            .iter()
            .map(|&j| j as u64)
            .sum()
    }

    /// Mean outside-count over `[from, to)`.
    pub fn mean_outside(&self, from: usize, to: usize) -> f64 {
        let window = &self.inside[from.min(self.inside.len())..to.min(self.inside.len())];
        let total: u64 = window.iter().map(|&c| self.runs as u64 - c as u64).sum();
        total as f64 / window.len().max(1) as f64
    }
}

struct OccupancyPartial {
    inside: Vec<u32>,
    jumps: Vec<u32>,
}

fn occupancy_track(
    x: &Vector,
    k: usize,
    center: &Vector,
    radius: f64,
    partial: &mut OccupancyPartial,
    was_inside: &mut Option<bool>,
    first_entry: &mut Option<usize>,
) {
    let inside = (x - center).norm() <= radius;
    if inside {
        partial.inside[k] += 1;
        if first_entry.is_none() {
            *first_entry = Some(k);
        }
    }
    if let Some(prev) = *was_inside {
        if prev != inside {
            partial.jumps[k] += 1;
        }
    }
    *was_inside = Some(inside);
}

/// Streams an ensemble through the ball-occupancy counters without storing
/// trajectories. A trajectory that diverges counts as outside from its
/// divergence step onward.
pub fn run_ball_occupancy(
    dynamics: &Dynamics,
    ens: &EnsembleSpec,
    center: &Vector,
    radius: f64,
) -> Result<BallOccupancy, CoreError> {
    ens.validate()?;
    if radius <= 0.0 {
        return Err(CoreError::invalid("ball radius must be positive"));
    }
    let iterations = ens.steps + 1;
    let results: Vec<(OccupancyPartial, Option<usize>, Option<usize>)> = (0..ens.runs)
        .into_par_iter()
        .map(
            |r| -> Result<(OccupancyPartial, Option<usize>, Option<usize>), CoreError> {
                let mut rng = RngStream::new(ens.base_seed, r as u64);
                let x0 = ens.x0.sample(&mut rng);
                let mut partial = OccupancyPartial {
                    inside: vec![0; iterations],
                    jumps: vec![0; iterations],
                };
                let mut was_inside = None;
                let mut first_entry = None;
                let diverged = dynamics.stream(&x0, ens.steps, &mut rng, |k, x| {
                    occupancy_track(
                        x,
                        k,
                        center,
                        radius,
                        &mut partial,
                        &mut was_inside,
                        &mut first_entry,
                    );
                })?;
                if let (Some(step), Some(true)) = (diverged, was_inside) {
                    // leaving the finite range is an exit event
                    partial.jumps[step.min(iterations - 1)] += 1;
                }
                Ok((partial, first_entry, diverged))
            },
        )
        .collect::<Result<_, _>>()?;

    let mut inside = vec![0u32; iterations];
    let mut jumps = vec![0u32; iterations];
    let mut first_entry = Vec::with_capacity(ens.runs);
    let mut divergences = Vec::new();
    for (r, (partial, fe, diverged)) in results.into_iter().enumerate() {
        for k in 0..iterations {
            inside[k] += partial.inside[k];
            jumps[k] += partial.jumps[k];
        }
        first_entry.push(fe);
        if let Some(step) = diverged {
            divergences.push((r, step));
        }
    }
    Ok(BallOccupancy {
        radius,
        runs: ens.runs,
        inside,
        jumps,
        first_entry,
        divergences,
    })
}

/// Occupancy metrics over already-materialized paths.
pub fn ball_occupancy(paths: &[Vec<Vector>], center: &Vector, radius: f64) -> BallOccupancy {
    assert!(radius > 0.0, "ball radius must be positive");
    let iterations = paths.iter().map(|p| p.len()).max().unwrap_or(0);
    let mut inside = vec![0u32; iterations];
    let mut jumps = vec![0u32; iterations];
    let mut first_entry = Vec::with_capacity(paths.len());
    for path in paths {
        let mut partial = OccupancyPartial {
            inside: vec![0; iterations],
            jumps: vec![0; iterations],
        };
        let mut was_inside = None;
        let mut fe = None;
        for (k, x) in path.iter().enumerate() {
            occupancy_track(x, k, center, radius, &mut partial, &mut was_inside, &mut fe);
        }
        for k in 0..iterations {
            inside[k] += partial.inside[k];
            jumps[k] += partial.jumps[k];
        }
        first_entry.push(fe);
    }
    BallOccupancy {
        radius,
        runs: paths.len(),
        inside,
        jumps,
        first_entry,
        divergences: Vec::new(),
    }
}

/// Outcome of a saddle-escape run relative to a critical point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EscapeOutcome {
    /// Final distance beyond `threshold_far`; carries the first crossing.
    Escaped { first_escape: usize },
    /// Distance never exceeded `threshold_near`.
    Stuck,
    /// Exceeded `threshold_near` at some point but finished below
    /// `threshold_far`.
    Returned,
}

fn classify(max_dist: f64, final_dist: f64, first_far: Option<usize>, far: f64, near: f64) -> EscapeOutcome {
    if final_dist > far {
        EscapeOutcome::Escaped {
            first_escape: first_far.expect("final distance beyond far implies a crossing"),
        }
    } else if max_dist <= near {
        EscapeOutcome::Stuck
    } else {
        EscapeOutcome::Returned
    }
}

/// Classifies distance-to-critical-point series.
pub fn escape_metrics(distances: &[Vec<f64>], far: f64, near: f64) -> Vec<EscapeOutcome> {
    assert!(far > near && near > 0.0, "thresholds must satisfy far > near > 0");
    distances
        .iter()
        .map(|series| {
            let mut max_dist = 0.0f64;
            let mut first_far = None;
            for (k, &d) in series.iter().enumerate() {
                max_dist = max_dist.max(d);
                if first_far.is_none() && d > far {
                    first_far = Some(k);
                }
            }
            let final_dist = *series.last().expect("non-empty series");
            classify(max_dist, final_dist, first_far, far, near)
        })
        .collect()
}

/// Streams an ensemble through the escape classifier. Divergence counts as an
/// escape at the divergence step.
pub fn run_escape_ensemble(
    dynamics: &Dynamics,
    ens: &EnsembleSpec,
    center: &Vector,
    far: f64,
    near: f64,
) -> Result<Vec<EscapeOutcome>, CoreError> {
    ens.validate()?;
    assert!(far > near && near > 0.0, "thresholds must satisfy far > near > 0");
    (0..ens.runs)
        .into_par_iter()
        .map(|r| -> Result<EscapeOutcome, CoreError> {
            let mut rng = RngStream::new(ens.base_seed, r as u64);
            let x0 = ens.x0.sample(&mut rng);
            let mut max_dist = 0.0f64;
            let mut final_dist = 0.0f64;
            let mut first_far = None;
            let diverged = dynamics.stream(&x0, ens.steps, &mut rng, |k, x| {
                let d = (x - center).norm();
                max_dist = max_dist.max(d);
                final_dist = d;
                if first_far.is_none() && d > far {
                    first_far = Some(k);
                }
            })?;
            if let Some(step) = diverged {
                return Ok(EscapeOutcome::Escaped {
                    first_escape: first_far.unwrap_or(step),
                });
            }
            Ok(classify(max_dist, final_dist, first_far, far, near))
        })
        .collect()
}
