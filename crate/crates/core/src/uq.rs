//! Field realizations from a trained model and their reductions: mean field,
//! uncertainty field (summed per-component standard deviations), and error
//! field (per-node L1 distance to ground truth).

use crate::field::{DomainSpec, FieldError, GridVectorField, ScalarField};
use crate::neural::{forward, ForwardMode, NetworkConfig, NeuralError, Parameters};
use crate::seed::realization_seed;
use crate::train::TargetScaling;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum UqError {
    #[error("realization sets need at least {needed} samples, got {got}")]
    InsufficientSamples { needed: usize, got: usize },
    #[error("fields live on different domains: {0}")]
    DomainMismatch(String),
    #[error(transparent)]
    Neural(#[from] NeuralError),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error("invalid sampling setup: {0}")]
    Config(String),
}

/// How a realization set was produced.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum RealizationSource {
    McDropout { p_test: f64 },
    Ensemble,
}

/// `m` predicted vector fields sharing one grid.
#[derive(Debug, Clone)]
pub struct FieldRealizationSet {
    source: RealizationSource,
    realizations: Vec<GridVectorField>,
}

impl FieldRealizationSet {
    pub fn new(
        source: RealizationSource,
        realizations: Vec<GridVectorField>,
    ) -> Result<Self, UqError> {
        if realizations.is_empty() {
            return Err(UqError::InsufficientSamples { needed: 1, got: 0 });
        }
        let first = realizations[0].domain().clone();
        let components = realizations[0].components();
        for (i, r) in realizations.iter().enumerate() {
            if r.domain() != &first || r.components() != components {
                return Err(UqError::DomainMismatch(format!(
                    "realization {i} differs from realization 0"
                )));
            }
        }
        Ok(Self {
            source,
            realizations,
        })
    }

    pub fn source(&self) -> RealizationSource {
        self.source
    }

    pub fn len(&self) -> usize {
        self.realizations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.realizations.is_empty()
    }

    pub fn realizations(&self) -> &[GridVectorField] {
        &self.realizations
    }

    pub fn domain(&self) -> &DomainSpec {
        self.realizations[0].domain()
    }

    pub fn components(&self) -> usize {
        self.realizations[0].components()
    }
}

/// Run the network over every grid node in batches, with or without dropout.
/// Dropout masks are redrawn on every forward call (each batch of each pass).
fn predict_grid(
    params: &Parameters,
    config: &NetworkConfig,
    domain: &DomainSpec,
    batch_size: usize,
    dropout: Option<(f64, &mut ChaCha8Rng)>,
    target_scaling: Option<&TargetScaling>,
) -> Result<GridVectorField, UqError> {
    if config.input_dim != domain.axes() {
        return Err(UqError::Config(format!(
            "network input_dim {} does not match domain with {} axes",
            config.input_dim,
            domain.axes()
        )));
    }
    let d = domain.axes();
    let v = config.output_dim;
    let mut coords = Vec::with_capacity(domain.node_count() * d);
    for p in domain.node_points() {
        coords.extend(domain.normalize(&p)?);
    }
    let mut data = Vec::with_capacity(domain.node_count() * v);
    let mut dropout = dropout;
    for chunk in coords.chunks(batch_size.max(1) * d) {
        let mode = match &mut dropout {
            Some((p, rng)) => ForwardMode::Dropout { p: *p, rng: *rng },
            None => ForwardMode::Deterministic,
        };
        let (mut pred, _) = forward(params, config, chunk, mode)?;
        if let Some(s) = target_scaling {
            for (i, val) in pred.iter_mut().enumerate() {
                *val = s.unscale(i % v, *val);
            }
        }
        data.append(&mut pred);
    }
    Ok(GridVectorField::new(domain.clone(), v, data)?)
}

/// Deterministic full-grid inference (no dropout).
pub fn predict_field(
    params: &Parameters,
    config: &NetworkConfig,
    domain: &DomainSpec,
    batch_size: usize,
    target_scaling: Option<&TargetScaling>,
) -> Result<GridVectorField, UqError> {
    predict_grid(params, config, domain, batch_size, None, target_scaling)
}

/// `m` stochastic full-grid passes with dropout live at `p_test`. Each
/// realization draws masks from its own stream derived from `seed` and the
/// realization index, so the set is reproducible and order-independent.
#[allow(clippy::too_many_arguments)]
pub fn sample_realizations_mcdropout(
    params: &Parameters,
    config: &NetworkConfig,
    domain: &DomainSpec,
    m: usize,
    p_test: f64,
    seed: u64,
    batch_size: usize,
    target_scaling: Option<&TargetScaling>,
) -> Result<FieldRealizationSet, UqError> {
    if m == 0 {
        return Err(UqError::InsufficientSamples { needed: 1, got: 0 });
    }
    if !(0.0..1.0).contains(&p_test) {
        return Err(UqError::Config(format!(
            "p_test must lie in [0, 1), got {p_test}"
        )));
    }
    let realizations: Vec<GridVectorField> = (0..m)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(realization_seed(seed, i));
            predict_grid(
                params,
                config,
                domain,
                batch_size,
                Some((p_test, &mut rng)),
                target_scaling,
            )
        })
        .collect::<Result<_, _>>()?;
    FieldRealizationSet::new(RealizationSource::McDropout { p_test }, realizations)
}

/// One deterministic full-grid inference per ensemble member.
pub fn sample_realizations_ensemble(
    member_params: &[(Parameters, Option<TargetScaling>)],
    config: &NetworkConfig,
    domain: &DomainSpec,
    batch_size: usize,
) -> Result<FieldRealizationSet, UqError> {
    if member_params.is_empty() {
        return Err(UqError::InsufficientSamples { needed: 1, got: 0 });
    }
    let realizations: Vec<GridVectorField> = member_params
        .par_iter()
        .map(|(params, scaling)| {
            predict_grid(params, config, domain, batch_size, None, scaling.as_ref())
        })
        .collect::<Result<_, _>>()?;
    FieldRealizationSet::new(RealizationSource::Ensemble, realizations)
}

/// Per-node, per-component arithmetic mean over realizations.
pub fn mean_field(set: &FieldRealizationSet) -> GridVectorField {
    let domain = set.domain().clone();
    let v = set.components();
    let len = domain.node_count() * v;
    let mut acc = vec![0.0f64; len];
    for r in set.realizations() {
        for (a, x) in acc.iter_mut().zip(r.data()) {
            *a += x;
        }
    }
    let inv = 1.0 / set.len() as f64;
    for a in &mut acc {
        *a *= inv;
    }
    GridVectorField::new(domain, v, acc).expect("mean of finite realizations is finite")
}

/// Per-node sum over components of the population standard deviation
/// (divisor `m`) across realizations.
pub fn uncertainty_field(set: &FieldRealizationSet) -> Result<ScalarField, UqError> {
    let m = set.len();
    if m < 2 {
        return Err(UqError::InsufficientSamples { needed: 2, got: m });
    }
    let domain = set.domain().clone();
    let v = set.components();
    let nodes = domain.node_count();
    let mean = mean_field(set);
    let mut out = vec![0.0f64; nodes];
    let mut var = vec![0.0f64; v];
    for node in 0..nodes {
        var.iter_mut().for_each(|x| *x = 0.0);
        let mu = mean.node(node);
        for r in set.realizations() {
            let x = r.node(node);
            for c in 0..v {
                let d = x[c] - mu[c];
                var[c] += d * d;
            }
        }
        out[node] = var.iter().map(|s| (s / m as f64).sqrt()).sum();
    }
    Ok(ScalarField::new(domain, out).expect("std of finite data is finite"))
}

/// Per-node L1 distance between a prediction and the ground truth.
pub fn error_field(
    pred: &GridVectorField,
    truth: &GridVectorField,
) -> Result<ScalarField, UqError> {
    if pred.domain() != truth.domain() || pred.components() != truth.components() {
        return Err(UqError::DomainMismatch(
            "prediction and truth grids differ".into(),
        ));
    }
    let v = pred.components();
    let nodes = pred.domain().node_count();
    let mut out = vec![0.0f64; nodes];
    for node in 0..nodes {
        out[node] = pred
            .node(node)
            .iter()
            .zip(truth.node(node))
            .map(|(p, t)| (p - t).abs())
            .sum();
    }
    Ok(ScalarField::new(pred.domain().clone(), out)?)
}
