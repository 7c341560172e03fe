//! Uncertainty-aware implicit neural representations of steady 2D/3D vector
//! fields.
//!
//! A residual sine-activated MLP learns the map from spatial coordinates to
//! vector values. Two sampling strategies turn the trained model into a
//! distribution over fields: Monte Carlo dropout (stochastic forward passes
//! of one model) and deep ensembles (independently trained replicas). The
//! resulting field realizations drive uncertainty-aware flow analysis:
//! reconstruction with per-node uncertainty, streamline bundles with
//! per-step spread, and critical-point detection with spatial variability
//! maps.
//!
//! Module map:
//! - [`field`]: rectilinear grids, interpolation, analytic test fields
//! - [`neural`]: the network, its gradients, Adam and LR scheduling
//! - [`train`]: single-model and ensemble training loops
//! - [`uq`]: realization sampling and mean/uncertainty/error reductions
//! - [`flow`]: RK4 streamlines, bundle aggregation, critical points
//! - [`metrics`]: PSNR, RMSE, Chamfer/Hausdorff, critical-point error
//! - [`io`]: raw field files, checkpoints, streamline bundle export

pub mod field;
pub mod flow;
pub mod io;
pub mod metrics;
pub mod neural;
pub mod seed;
pub mod train;
pub mod uq;

pub use field::{
    generate_analytic, AnalyticFieldKind, DomainSpec, FieldError, GridVectorField, ScalarField,
};
pub use neural::{
    backward, forward, forward_deterministic, init_parameters, DropoutPlacement, ForwardMode,
    ForwardTrace, NetworkConfig, NeuralError, Parameters,
};
pub use train::{
    make_epoch_batches, train_ensemble, train_single_model, TrainConfig, TrainError, TrainOutcome,
    TrainReport,
};
