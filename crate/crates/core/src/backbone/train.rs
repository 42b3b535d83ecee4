use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::graph::GraphSpec;
use super::model::{backward, loss_and_gradient, WindowBatch};
use super::optim::{adam_step, AdamConfig, OptimizerState};
use super::params::ModelParams;
use crate::elastic::ActivenessMatrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConvergenceConfig {
    pub rel_tol: f64,
    pub patience: usize,
    pub max_epochs: usize,
    pub batch_size: usize,
    /// Seeds minibatch shuffling.
    pub seed: u64,
}

impl Default for ConvergenceConfig {
    fn default() -> Self {
        Self {
            rel_tol: 1e-4,
            patience: 5,
            max_epochs: 100,
            batch_size: 32,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub trace: Vec<f64>,
    /// Gradient of the full-data loss at the returned parameters.
    pub final_gradient: Vec<f64>,
}

/// Per-step choice of activeness for [`run_epoch`].
pub enum StepMask {
    Dense,
    Masked(ActivenessMatrix),
    /// Every parameter dropped: the step is skipped.
    Skip,
}

/// One shuffled pass over `data` in minibatches; returns the mean batch loss.
pub fn run_epoch(
    params: &mut ModelParams,
    state: &mut OptimizerState,
    data: &WindowBatch,
    graph: &GraphSpec,
    batch_size: usize,
    rng: &mut ChaCha8Rng,
    mut next_mask: impl FnMut(&mut ChaCha8Rng) -> StepMask,
) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::Empty("training data has no windows".into()));
    }
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(rng);
    let mut total = 0.0;
    let mut batches = 0usize;
    for chunk in order.chunks(batch_size.max(1)) {
        let batch = data.select(chunk);
        if batch.mask.sum() <= 0.0 {
            continue;
        }
        match next_mask(rng) {
            StepMask::Skip => {
                let (loss, _) = loss_and_gradient(params, &batch, graph, None)?;
                total += loss;
            }
            StepMask::Dense => {
                let (loss, grad) = loss_and_gradient(params, &batch, graph, None)?;
                adam_step(params, &grad, state, None)?;
                total += loss;
            }
            StepMask::Masked(mask) => {
                let (loss, grad) = loss_and_gradient(params, &batch, graph, Some(&mask))?;
                adam_step(params, &grad, state, Some(mask.keep()))?;
                total += loss;
            }
        }
        batches += 1;
    }
    if batches == 0 {
        return Err(Error::InvalidArgument("no window has an observed target".into()));
    }
    Ok(total / batches as f64)
}

/// Dense training from `params_init` for exactly `epochs` shuffled passes.
pub fn train_epochs(
    params_init: &ModelParams,
    data: &WindowBatch,
    graph: &GraphSpec,
    optimizer: AdamConfig,
    batch_size: usize,
    epochs: usize,
    seed: u64,
) -> Result<(ModelParams, Vec<f64>)> {
    let mut params = params_init.clone();
    let mut state = OptimizerState::new(params.len(), optimizer);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut trace = Vec::with_capacity(epochs);
    for epoch in 0..epochs {
        let loss = run_epoch(&mut params, &mut state, data, graph, batch_size, &mut rng, |_| StepMask::Dense)?;
        if !loss.is_finite() || !params.is_finite() {
            return Err(Error::Diverged { epoch, trace });
        }
        trace.push(loss);
    }
    Ok((params, trace))
}

/// Train until the epoch-mean loss stops improving by more than `rel_tol`
/// for `patience` consecutive epochs, or `max_epochs` is reached.
pub fn train_to_convergence(
    params_init: &ModelParams,
    data: &WindowBatch,
    graph: &GraphSpec,
    optimizer: AdamConfig,
    convergence: ConvergenceConfig,
) -> Result<TrainOutcome> {
    if data.is_empty() {
        return Err(Error::Empty("training data has no windows".into()));
    }
    let mut params = params_init.clone();
    let mut state = OptimizerState::new(params.len(), optimizer);
    let mut rng = ChaCha8Rng::seed_from_u64(convergence.seed);
    let mut trace = Vec::new();
    let mut stalled = 0usize;
    for epoch in 0..convergence.max_epochs {
        let loss = run_epoch(
            &mut params,
            &mut state,
            data,
            graph,
            convergence.batch_size,
            &mut rng,
            |_| StepMask::Dense,
        )?;
        if !loss.is_finite() || !params.is_finite() {
            return Err(Error::Diverged { epoch, trace });
        }
        if let Some(&prev) = trace.last() {
            let improvement = (prev - loss) / f64::max(prev.abs(), f64::MIN_POSITIVE);
            if improvement < convergence.rel_tol {
                stalled += 1;
            } else {
                stalled = 0;
            }
        }
        trace.push(loss);
        if stalled >= convergence.patience {
            break;
        }
    }
    let final_gradient = backward(&params, data, graph, None)?;
    Ok(TrainOutcome {
        params,
        trace,
        final_gradient,
    })
}
