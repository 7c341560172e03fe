//! Training loops: a single model with optional dropout, and independently
//! trained ensemble members.

use crate::field::{FieldError, GridVectorField};
use crate::neural::optim::{adam_step, plateau_scheduler_step, AdamState};
use crate::neural::{
    backward, forward, init_parameters, DropoutPlacement, ForwardMode, NetworkConfig, NeuralError,
    Parameters,
};
use crate::seed::{ensemble_member_seed, mix_seed, stream};
use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training setup: {0}")]
    Config(String),
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error(transparent)]
    Neural(#[from] NeuralError),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error("ensemble member {index} failed: {source}")]
    Member {
        index: usize,
        #[source]
        source: Box<TrainError>,
    },
}

/// Optimization hyperparameters. Defaults follow the reference setup:
/// 500 epochs, batch 2048, Adam(5e-5, 0.9, 0.999), learning rate decayed
/// by 0.1 after 10 stalled epochs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub patience: usize,
    pub decay_factor: f64,
    pub min_learning_rate: f64,
    pub seed: u64,
    /// Min-max scale each target component to [-1, 1] before training.
    /// Off by default; vectors are trained in native units.
    pub scale_targets: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 500,
            batch_size: 2048,
            learning_rate: 5e-5,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            patience: 10,
            decay_factor: 0.1,
            min_learning_rate: 1e-8,
            seed: 0,
            scale_targets: false,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<(), TrainError> {
        if self.batch_size == 0 {
            return Err(TrainError::Config("batch_size must be at least 1".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(TrainError::Config("learning_rate must be positive".into()));
        }
        if self.patience == 0 {
            return Err(TrainError::Config("patience must be at least 1".into()));
        }
        Ok(())
    }
}

/// Per-component affine map recorded when targets were min-max scaled,
/// needed to undo the scaling at inference time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetScaling {
    /// (min, max) per vector component.
    pub component_ranges: Vec<(f64, f64)>,
}

impl TargetScaling {
    fn fit(field: &GridVectorField) -> Self {
        let v = field.components();
        let mut ranges = vec![(f64::INFINITY, f64::NEG_INFINITY); v];
        for node in 0..field.domain().node_count() {
            for (c, val) in field.node(node).iter().enumerate() {
                ranges[c].0 = ranges[c].0.min(*val);
                ranges[c].1 = ranges[c].1.max(*val);
            }
        }
        Self {
            component_ranges: ranges,
        }
    }

    pub fn scale(&self, component: usize, value: f64) -> f64 {
        let (lo, hi) = self.component_ranges[component];
        if hi > lo {
            2.0 * (value - lo) / (hi - lo) - 1.0
        } else {
            0.0
        }
    }

    pub fn unscale(&self, component: usize, value: f64) -> f64 {
        let (lo, hi) = self.component_ranges[component];
        if hi > lo {
            lo + (value + 1.0) * 0.5 * (hi - lo)
        } else {
            lo
        }
    }
}

/// What one training run produced.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: Parameters,
    pub report: TrainReport,
    /// Present iff `scale_targets` was enabled.
    pub target_scaling: Option<TargetScaling>,
}

/// Loss/learning-rate trajectory and wall-clock timings of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epoch_losses: Vec<f64>,
    pub epoch_learning_rates: Vec<f64>,
    pub epoch_seconds: Vec<f64>,
    pub total_seconds: f64,
}

/// Mean squared error averaged over batch entries and vector components.
pub fn mse_loss(pred: &[f64], target: &[f64], components: usize) -> f64 {
    debug_assert_eq!(pred.len(), target.len());
    let n = pred.len() / components;
    let sse: f64 = pred
        .iter()
        .zip(target)
        .map(|(p, t)| (p - t) * (p - t))
        .sum();
    sse / (n * components) as f64
}

/// Uniform random permutation of `0..n_samples` split into consecutive
/// chunks of `batch_size` (the final chunk may be short).
pub fn make_epoch_batches(
    n_samples: usize,
    batch_size: usize,
    rng: &mut dyn RngCore,
) -> Vec<Vec<usize>> {
    assert!(n_samples >= 1 && batch_size >= 1);
    let mut indices: Vec<usize> = (0..n_samples).collect();
    indices.shuffle(rng);
    indices
        .chunks(batch_size)
        .map(|c| c.to_vec())
        .collect()
}

/// Fit one network to a grid field. Training samples are (normalized node
/// coordinate -> node vector) pairs over all grid nodes; dropout is active
/// during training iff the placement is not `None`, at `dropout_p_train`.
pub fn train_single_model(
    field: &GridVectorField,
    net_config: &NetworkConfig,
    train_config: &TrainConfig,
) -> Result<TrainOutcome, TrainError> {
    net_config.validate()?;
    train_config.validate()?;
    if net_config.input_dim != field.domain().axes() {
        return Err(TrainError::Config(format!(
            "network input_dim {} does not match domain with {} axes",
            net_config.input_dim,
            field.domain().axes()
        )));
    }
    if net_config.output_dim != field.components() {
        return Err(TrainError::Config(format!(
            "network output_dim {} does not match field with {} components",
            net_config.output_dim,
            field.components()
        )));
    }

    let started = Instant::now();
    let d = net_config.input_dim;
    let v = net_config.output_dim;
    let n = field.domain().node_count();

    let mut coords = Vec::with_capacity(n * d);
    for p in field.domain().node_points() {
        coords.extend(field.domain().normalize(&p)?);
    }
    let target_scaling = train_config.scale_targets.then(|| TargetScaling::fit(field));
    let targets: Vec<f64> = match &target_scaling {
        Some(s) => field
            .data()
            .iter()
            .enumerate()
            .map(|(i, val)| s.scale(i % v, *val))
            .collect(),
        None => field.data().to_vec(),
    };

    let seed = train_config.seed;
    let mut params = init_parameters(net_config, mix_seed(seed, stream::INIT))?;
    let mut adam = AdamState::new(
        params.len(),
        train_config.learning_rate,
        train_config.beta1,
        train_config.beta2,
        train_config.epsilon,
    );
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, stream::SHUFFLE));
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, stream::DROPOUT));
    let dropout_active = net_config.dropout_placement != DropoutPlacement::None;

    let mut epoch_losses = Vec::with_capacity(train_config.epochs);
    let mut epoch_lrs = Vec::with_capacity(train_config.epochs);
    let mut epoch_seconds = Vec::with_capacity(train_config.epochs);
    let mut batch_coords = Vec::new();
    let mut batch_targets = Vec::new();

    for epoch in 0..train_config.epochs {
        let epoch_started = Instant::now();
        let batches = make_epoch_batches(n, train_config.batch_size, &mut shuffle_rng);
        let mut epoch_sse = 0.0;
        for (batch_idx, batch) in batches.iter().enumerate() {
            batch_coords.clear();
            batch_targets.clear();
            for &i in batch {
                batch_coords.extend_from_slice(&coords[i * d..(i + 1) * d]);
                batch_targets.extend_from_slice(&targets[i * v..(i + 1) * v]);
            }
            let mode = if dropout_active {
                ForwardMode::Dropout {
                    p: net_config.dropout_p_train,
                    rng: &mut dropout_rng,
                }
            } else {
                ForwardMode::Deterministic
            };
            let (pred, trace) = forward(&params, net_config, &batch_coords, mode)?;
            let scale = 1.0 / (batch.len() * v) as f64;
            let mut sse = 0.0;
            let upstream: Vec<f64> = pred
                .iter()
                .zip(&batch_targets)
                .map(|(p, t)| {
                    let diff = p - t;
                    sse += diff * diff;
                    2.0 * diff * scale
                })
                .collect();
            if !sse.is_finite() {
                return Err(TrainError::NonFiniteLoss {
                    epoch,
                    batch: batch_idx,
                });
            }
            epoch_sse += sse;
            let grads = backward(&trace, &params, net_config, &upstream)?;
            adam_step(&mut adam, &mut params, &grads)?;
        }
        let epoch_loss = epoch_sse / (n * v) as f64;
        epoch_losses.push(epoch_loss);
        epoch_lrs.push(adam.learning_rate);
        adam.learning_rate = plateau_scheduler_step(
            adam.learning_rate,
            &epoch_losses,
            train_config.patience,
            train_config.decay_factor,
            train_config.min_learning_rate,
        );
        epoch_seconds.push(epoch_started.elapsed().as_secs_f64());
    }

    Ok(TrainOutcome {
        params,
        report: TrainReport {
            epoch_losses,
            epoch_learning_rates: epoch_lrs,
            epoch_seconds,
            total_seconds: started.elapsed().as_secs_f64(),
        },
        target_scaling,
    })
}

/// Train `members` independent models, each with its own derived seed (and
/// therefore its own init and shuffle order). Members run in parallel; the
/// result order is by member index.
pub fn train_ensemble(
    field: &GridVectorField,
    net_config: &NetworkConfig,
    train_config: &TrainConfig,
    members: usize,
) -> Result<Vec<TrainOutcome>, TrainError> {
    if members == 0 {
        return Err(TrainError::Config("ensemble needs at least 1 member".into()));
    }
    if net_config.dropout_placement != DropoutPlacement::None {
        return Err(TrainError::Config(
            "ensemble members train without dropout; set dropout_placement to none".into(),
        ));
    }
    (0..members)
        .into_par_iter()
        .map(|k| {
            let member_config = TrainConfig {
                seed: ensemble_member_seed(train_config.seed, k),
                ..train_config.clone()
            };
            train_single_model(field, net_config, &member_config).map_err(|e| TrainError::Member {
                index: k,
                source: Box::new(e),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{generate_analytic, AnalyticFieldKind, DomainSpec};

    fn tiny_net(width: usize, blocks: usize) -> NetworkConfig {
        NetworkConfig {
            input_dim: 2,
            output_dim: 2,
            hidden_width: width,
            num_res_blocks: blocks,
            omega0: 30.0,
            dropout_placement: DropoutPlacement::None,
            dropout_p_train: 0.0,
            dropout_p_test: 0.0,
        }
    }

    fn constant_field(n: usize, value: [f64; 2]) -> GridVectorField {
        let d = DomainSpec::new(vec![n, n], vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap();
        GridVectorField::from_fn(d, 2, |_| value.to_vec()).unwrap()
    }

    #[test]
    fn batches_partition_all_indices() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let batches = make_epoch_batches(5, 2, &mut rng);
        assert_eq!(batches.len(), 3);
        assert_eq!(batches[0].len(), 2);
        assert_eq!(batches[1].len(), 2);
        assert_eq!(batches[2].len(), 1);
        let mut all: Vec<usize> = batches.concat();
        all.sort_unstable();
        assert_eq!(all, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn oversized_batch_is_a_single_permutation() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let batches = make_epoch_batches(4, 100, &mut rng);
        assert_eq!(batches.len(), 1);
        let mut b = batches[0].clone();
        b.sort_unstable();
        assert_eq!(b, vec![0, 1, 2, 3]);
    }

    #[test]
    fn batch_sequence_is_seed_deterministic() {
        let mut a = ChaCha8Rng::seed_from_u64(3);
        let mut b = ChaCha8Rng::seed_from_u64(3);
        assert_eq!(make_epoch_batches(64, 7, &mut a), make_epoch_batches(64, 7, &mut b));
    }

    #[test]
    fn mse_matches_direct_recomputation() {
        let pred = [1.0, 2.0, 3.0, 5.0];
        let target = [0.0, 2.0, 1.0, 1.0];
        // direct: (1 + 0 + 4 + 16) / (2 * 2)
        assert_eq!(mse_loss(&pred, &target, 2), 21.0 / 4.0);
    }

    #[test]
    fn zero_epochs_returns_initial_parameters() {
        let field = constant_field(4, [1.0, -1.0]);
        let net = tiny_net(4, 1);
        let cfg = TrainConfig {
            epochs: 0,
            seed: 9,
            ..TrainConfig::default()
        };
        let out = train_single_model(&field, &net, &cfg).unwrap();
        let init = init_parameters(&net, mix_seed(9, stream::INIT)).unwrap();
        assert_eq!(out.params, init);
        assert!(out.report.epoch_losses.is_empty());
    }

    #[test]
    fn training_is_reproducible() {
        let d = DomainSpec::new(vec![8, 8], vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap();
        let field = generate_analytic(&AnalyticFieldKind::center([0.0, 0.0]), &d).unwrap();
        let mut net = tiny_net(8, 2);
        net.dropout_placement = DropoutPlacement::LastBlock;
        net.dropout_p_train = 0.05;
        let cfg = TrainConfig {
            epochs: 5,
            batch_size: 16,
            learning_rate: 1e-3,
            seed: 1234,
            ..TrainConfig::default()
        };
        let a = train_single_model(&field, &net, &cfg).unwrap();
        let b = train_single_model(&field, &net, &cfg).unwrap();
        assert_eq!(a.params, b.params);
        assert_eq!(a.report.epoch_losses, b.report.epoch_losses);
    }

    #[test]
    fn constant_target_fits_to_near_zero_loss() {
        let field = constant_field(16, [3.0, -2.0]);
        let net = tiny_net(8, 2);
        let cfg = TrainConfig {
            epochs: 200,
            batch_size: 64,
            learning_rate: 1e-2,
            seed: 7,
            ..TrainConfig::default()
        };
        let out = train_single_model(&field, &net, &cfg).unwrap();
        let last = *out.report.epoch_losses.last().unwrap();
        assert!(last < 1e-8, "final loss {last}");
    }

    #[test]
    fn early_epochs_trend_downward_on_linear_target() {
        let d = DomainSpec::new(vec![12, 12], vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap();
        let field = GridVectorField::from_fn(d, 2, |p| vec![0.5 * p[0], -0.25 * p[1]]).unwrap();
        let cfg = TrainConfig {
            epochs: 6,
            batch_size: 36,
            learning_rate: 1e-3,
            seed: 3,
            ..TrainConfig::default()
        };
        let out = train_single_model(&field, &tiny_net(8, 2), &cfg).unwrap();
        let losses = &out.report.epoch_losses;
        let decreases = losses
            .windows(2)
            .filter(|w| w[1] < w[0])
            .count();
        assert!(decreases >= 4, "losses {losses:?}");
    }

    #[test]
    fn ensemble_member_zero_equals_single_model_with_derived_seed() {
        let field = constant_field(6, [1.0, 2.0]);
        let net = tiny_net(4, 1);
        let cfg = TrainConfig {
            epochs: 3,
            batch_size: 12,
            learning_rate: 1e-3,
            seed: 77,
            ..TrainConfig::default()
        };
        let ens = train_ensemble(&field, &net, &cfg, 1).unwrap();
        let single = train_single_model(
            &field,
            &net,
            &TrainConfig {
                seed: ensemble_member_seed(77, 0),
                ..cfg
            },
        )
        .unwrap();
        assert_eq!(ens[0].params, single.params);
    }

    #[test]
    fn ensemble_members_differ() {
        let field = constant_field(6, [1.0, 2.0]);
        let net = tiny_net(4, 1);
        let cfg = TrainConfig {
            epochs: 2,
            batch_size: 36,
            learning_rate: 1e-3,
            seed: 5,
            ..TrainConfig::default()
        };
        let ens = train_ensemble(&field, &net, &cfg, 2).unwrap();
        assert_ne!(ens[0].params, ens[1].params);
    }

    #[test]
    fn ensemble_rejects_dropout_config() {
        let field = constant_field(4, [0.0, 1.0]);
        let mut net = tiny_net(4, 1);
        net.dropout_placement = DropoutPlacement::LastBlock;
        assert!(matches!(
            train_ensemble(&field, &net, &TrainConfig::default(), 2),
            Err(TrainError::Config(_))
        ));
    }

    #[test]
    fn target_scaling_roundtrip() {
        let s = TargetScaling {
            component_ranges: vec![(-2.0, 6.0), (3.0, 3.0)],
        };
        let x = 1.5;
        assert!((s.unscale(0, s.scale(0, x)) - x).abs() < 1e-12);
        // degenerate range maps to the constant
        assert_eq!(s.unscale(1, s.scale(1, 3.0)), 3.0);
    }

    #[test]
    fn target_scaling_fit_covers_component_ranges() {
        let d = DomainSpec::new(vec![2, 2], vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        let field = GridVectorField::from_fn(d, 2, |p| vec![4.0 * p[0], p[1] - 10.0]).unwrap();
        let s = TargetScaling::fit(&field);
        assert_eq!(s.component_ranges, vec![(0.0, 4.0), (-10.0, -9.0)]);
        let cfg = TrainConfig {
            epochs: 1,
            batch_size: 4,
            scale_targets: true,
            ..TrainConfig::default()
        };
        let out = train_single_model(&field, &tiny_net(4, 1), &cfg).unwrap();
        assert_eq!(out.target_scaling.unwrap().component_ranges, s.component_ranges);
    }
}
