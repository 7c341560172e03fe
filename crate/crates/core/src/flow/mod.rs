//! Streamline tracing over arbitrary vector-field samplers and
//! uncertainty-aware aggregation of streamline bundles.
//!
//! Tracing uses classic fixed-step RK4; the fixed step keeps realizations of
//! the same seed aligned by integration step, which the bundle aggregation
//! (per-step mean/median over surviving realizations) relies on.

mod critical;

pub use critical::{
    classify_critical_point, default_clamp_radius, detect_critical_points, variability_field,
    CriticalPoint, CriticalPointKind,
};

use crate::field::{DomainSpec, GridVectorField};
use crate::neural::{forward_deterministic, NetworkConfig, Parameters};
use crate::train::TargetScaling;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Speeds below this terminate a trace as stagnant.
pub const STAGNATION_SPEED: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum FlowError {
    #[error("integration step left the domain at {point:?}")]
    OutOfDomain { point: Vec<f64> },
    #[error("seed {point:?} lies outside the domain")]
    SeedOutOfDomain { point: Vec<f64> },
    #[error("streamline bundle has no realizations")]
    EmptyBundle,
    #[error("bundle realizations do not share a seed point")]
    MismatchedSeeds,
    #[error("jacobian of length {len} is not a square 2x2 or 3x3 matrix")]
    NonSquare { len: usize },
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
}

/// Anything that can report a velocity at a physical point.
pub trait FieldSampler: Sync {
    fn axes(&self) -> usize;
    /// Velocity at `p`, or `None` outside the sampler's domain.
    fn velocity(&self, p: &[f64]) -> Option<Vec<f64>>;
}

impl FieldSampler for GridVectorField {
    fn axes(&self) -> usize {
        self.domain().axes()
    }

    fn velocity(&self, p: &[f64]) -> Option<Vec<f64>> {
        self.sample(p).ok()
    }
}

/// Deterministic network inference as a continuous vector field over the
/// checkpointed domain.
pub struct NeuralSampler<'a> {
    pub params: &'a Parameters,
    pub config: &'a NetworkConfig,
    pub domain: &'a DomainSpec,
    pub target_scaling: Option<&'a TargetScaling>,
}

impl FieldSampler for NeuralSampler<'_> {
    fn axes(&self) -> usize {
        self.domain.axes()
    }

    fn velocity(&self, p: &[f64]) -> Option<Vec<f64>> {
        let coords = self.domain.normalize(p).ok()?;
        let mut out = forward_deterministic(self.params, self.config, &coords).ok()?;
        if let Some(s) = self.target_scaling {
            for (c, v) in out.iter_mut().enumerate() {
                *v = s.unscale(c, *v);
            }
        }
        Some(out)
    }
}

/// Why a trace direction stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    DomainExit,
    MaxSteps,
    ZeroVelocity,
}

/// An integral curve through a seed: backward points (reversed), the seed,
/// then forward points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Streamline {
    points: Vec<Vec<f64>>,
    seed_index: usize,
    forward_termination: Termination,
    backward_termination: Termination,
}

impl Streamline {
    pub fn new(
        points: Vec<Vec<f64>>,
        seed_index: usize,
        forward_termination: Termination,
        backward_termination: Termination,
    ) -> Self {
        assert!(seed_index < points.len(), "seed must be present");
        Self {
            points,
            seed_index,
            forward_termination,
            backward_termination,
        }
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn seed_index(&self) -> usize {
        self.seed_index
    }

    pub fn seed(&self) -> &[f64] {
        &self.points[self.seed_index]
    }

    pub fn forward_len(&self) -> usize {
        self.points.len() - self.seed_index - 1
    }

    pub fn backward_len(&self) -> usize {
        self.seed_index
    }

    pub fn forward_termination(&self) -> Termination {
        self.forward_termination
    }

    pub fn backward_termination(&self) -> Termination {
        self.backward_termination
    }

    /// Point at a signed step offset from the seed (negative = backward).
    pub fn point_at_step(&self, step: isize) -> Option<&[f64]> {
        let idx = self.seed_index as isize + step;
        if idx < 0 || idx as usize >= self.points.len() {
            None
        } else {
            Some(&self.points[idx as usize])
        }
    }
}

/// One classic RK4 step of size `h` (negative `h` integrates backward).
/// Rejected with `OutOfDomain` if any stage point leaves the domain.
pub fn rk4_step<S: FieldSampler + ?Sized>(
    sampler: &S,
    p: &[f64],
    h: f64,
) -> Result<Vec<f64>, FlowError> {
    if h == 0.0 {
        return Err(FlowError::InvalidParam("step size must be non-zero".into()));
    }
    let stage = |q: &[f64]| {
        sampler.velocity(q).ok_or(FlowError::OutOfDomain {
            point: q.to_vec(),
        })
    };
    let at = |base: &[f64], k: &[f64], scale: f64| -> Vec<f64> {
        base.iter().zip(k).map(|(b, ki)| b + scale * ki).collect()
    };
    let k1 = stage(p)?;
    let k2 = stage(&at(p, &k1, h * 0.5))?;
    let k3 = stage(&at(p, &k2, h * 0.5))?;
    let k4 = stage(&at(p, &k3, h))?;
    Ok(p.iter()
        .enumerate()
        .map(|(a, x)| x + h / 6.0 * (k1[a] + 2.0 * k2[a] + 2.0 * k3[a] + k4[a]))
        .collect())
}

fn trace_direction<S: FieldSampler + ?Sized>(
    sampler: &S,
    seed: &[f64],
    signed_h: f64,
    max_steps: usize,
) -> (Vec<Vec<f64>>, Termination) {
    let mut points = Vec::new();
    let mut p = seed.to_vec();
    while points.len() < max_steps {
        let v = match sampler.velocity(&p) {
            Some(v) => v,
            None => return (points, Termination::DomainExit),
        };
        let speed = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if speed < STAGNATION_SPEED {
            return (points, Termination::ZeroVelocity);
        }
        let next = match rk4_step(sampler, &p, signed_h) {
            Ok(q) => q,
            Err(_) => return (points, Termination::DomainExit),
        };
        if sampler.velocity(&next).is_none() {
            return (points, Termination::DomainExit);
        }
        points.push(next.clone());
        p = next;
    }
    (points, Termination::MaxSteps)
}

/// Trace forward with `+h` and backward with `-h` until domain exit, the
/// step limit, or stagnation (`|v| <` [`STAGNATION_SPEED`]).
pub fn trace_streamline<S: FieldSampler + ?Sized>(
    sampler: &S,
    seed: &[f64],
    h: f64,
    max_steps_per_direction: usize,
) -> Result<Streamline, FlowError> {
    if !(h.is_finite() && h > 0.0) {
        return Err(FlowError::InvalidParam("step size must be positive".into()));
    }
    if sampler.velocity(seed).is_none() {
        return Err(FlowError::SeedOutOfDomain {
            point: seed.to_vec(),
        });
    }
    let (forward, forward_termination) = trace_direction(sampler, seed, h, max_steps_per_direction);
    let (backward, backward_termination) =
        trace_direction(sampler, seed, -h, max_steps_per_direction);

    let mut points = Vec::with_capacity(backward.len() + 1 + forward.len());
    points.extend(backward.into_iter().rev());
    let seed_index = points.len();
    points.push(seed.to_vec());
    points.extend(forward);
    Ok(Streamline::new(
        points,
        seed_index,
        forward_termination,
        backward_termination,
    ))
}

/// A set of streamline realizations from one seed plus their step-aligned
/// aggregate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamlineBundle {
    pub realizations: Vec<Streamline>,
    pub mean: Streamline,
    pub median: Streamline,
    /// Per aggregate point: sum over axes of the population std of
    /// coordinates across the realizations surviving at that step.
    pub uncertainty: Vec<f64>,
    /// Per aggregate point: number of realizations still alive at that step.
    pub support: Vec<usize>,
}

impl StreamlineBundle {
    pub fn n_realizations(&self) -> usize {
        self.realizations.len()
    }
}

/// Align realizations by signed step index relative to the seed and reduce:
/// at each step the mean and componentwise median are taken over the
/// realizations that still exist there, the per-step uncertainty is the sum
/// over axes of the population std, and the aggregate extends as long as at
/// least one realization survives.
pub fn aggregate_streamlines(realizations: &[Streamline]) -> Result<StreamlineBundle, FlowError> {
    if realizations.is_empty() {
        return Err(FlowError::EmptyBundle);
    }
    let seed = realizations[0].seed();
    if realizations.iter().any(|r| r.seed() != seed) {
        return Err(FlowError::MismatchedSeeds);
    }
    let axes = seed.len();
    let max_back = realizations.iter().map(|r| r.backward_len()).max().unwrap() as isize;
    let max_fwd = realizations.iter().map(|r| r.forward_len()).max().unwrap() as isize;

    let n_steps = (max_back + max_fwd + 1) as usize;
    let mut mean_points = Vec::with_capacity(n_steps);
    let mut median_points = Vec::with_capacity(n_steps);
    let mut uncertainty = Vec::with_capacity(n_steps);
    let mut support = Vec::with_capacity(n_steps);
    let mut axis_values: Vec<f64> = Vec::with_capacity(realizations.len());

    for step in -max_back..=max_fwd {
        let surviving: Vec<&[f64]> = realizations
            .iter()
            .filter_map(|r| r.point_at_step(step))
            .collect();
        debug_assert!(!surviving.is_empty());
        let m = surviving.len() as f64;
        let mut mean = vec![0.0; axes];
        let mut median = vec![0.0; axes];
        let mut spread = 0.0;
        for a in 0..axes {
            axis_values.clear();
            axis_values.extend(surviving.iter().map(|p| p[a]));
            let mu = axis_values.iter().sum::<f64>() / m;
            mean[a] = mu;
            let var = axis_values.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / m;
            spread += var.sqrt();
            axis_values.sort_by(|x, y| x.partial_cmp(y).unwrap());
            let mid = axis_values.len() / 2;
            median[a] = if axis_values.len() % 2 == 1 {
                axis_values[mid]
            } else {
                0.5 * (axis_values[mid - 1] + axis_values[mid])
            };
        }
        // a single survivor reproduces its coordinates bitwise
        if surviving.len() == 1 {
            mean.copy_from_slice(surviving[0]);
            median.copy_from_slice(surviving[0]);
        }
        mean_points.push(mean);
        median_points.push(median);
        uncertainty.push(spread);
        support.push(surviving.len());
    }

    let seed_index = max_back as usize;
    let longest_fwd = realizations
        .iter()
        .find(|r| r.forward_len() == max_fwd as usize)
        .unwrap();
    let longest_back = realizations
        .iter()
        .find(|r| r.backward_len() == max_back as usize)
        .unwrap();
    let mean_line = Streamline::new(
        mean_points,
        seed_index,
        longest_fwd.forward_termination(),
        longest_back.backward_termination(),
    );
    let median_line = Streamline::new(
        median_points.clone(),
        seed_index,
        longest_fwd.forward_termination(),
        longest_back.backward_termination(),
    );

    Ok(StreamlineBundle {
        realizations: realizations.to_vec(),
        mean: mean_line,
        median: median_line,
        uncertainty,
        support,
    })
}

/// Trace one realization per sampler from a common seed (in parallel) and
/// aggregate them into a bundle.
pub fn trace_bundle<S: FieldSampler>(
    samplers: &[S],
    seed: &[f64],
    h: f64,
    max_steps_per_direction: usize,
) -> Result<StreamlineBundle, FlowError> {
    if samplers.is_empty() {
        return Err(FlowError::EmptyBundle);
    }
    let lines: Vec<Streamline> = samplers
        .par_iter()
        .map(|s| trace_streamline(s, seed, h, max_steps_per_direction))
        .collect::<Result<_, _>>()?;
    aggregate_streamlines(&lines)
}

/// Default integration step: a quarter of the smallest grid spacing.
pub fn default_step_size(domain: &DomainSpec) -> f64 {
    0.25 * domain.min_spacing()
}
