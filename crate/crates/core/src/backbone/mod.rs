//! Graph-temporal forecasting backbone: a graph convolution over the flattened
//! input window followed by a two-layer readout,
//!
//! ```text
//! H1 = relu(Â · X · W1 + b1)
//! H2 = relu(H1 · W2 + b2)
//! Ŷ  = H2 · W3 + b3
//! ```
//!
//! trained with masked MAE and Adam. Gradients are computed in closed form.

mod graph;
mod model;
mod optim;
mod params;
mod train;

pub use graph::{normalize_adjacency, GraphSpec};
pub use model::{backward, effective_params, forward, loss_and_gradient, masked_mae_loss, WindowBatch};
pub use optim::{adam_step, adam_update, AdamConfig, OptimizerState};
pub use params::{ArchConfig, LayerSpec, ModelParams, ParamsFile};
pub use train::{run_epoch, train_epochs, train_to_convergence, ConvergenceConfig, StepMask, TrainOutcome};
