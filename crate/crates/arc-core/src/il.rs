//! Imitation-learning pre-training for the vehicle-following policy.
//!
//! Plain behavioral cloning: mean-squared error between the policy pedal
//! and the expert pedal over demonstration batches, RMSProp updates, and a
//! held-out validation split. The returned parameters are the best
//! validation snapshot, not the last epoch.

use crate::expert::Dataset;
use crate::nn::{mlp_grad, mlp_forward_tape, register_mlp, MlpParams};
use crate::optim::{RmsProp, RmsPropState, UpdateOutcome};
use crate::rng::SeedStream;
use crate::tape::Tape;
use crate::tensor::Tensor;
use alloc::vec::Vec;
use core::fmt;

/// Chunk width for pure-forward validation passes.
const VAL_CHUNK: usize = 256;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IlHyper {
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: u32,
    /// Fraction of rows held out for validation.
    pub val_frac: f64,
}

impl Default for IlHyper {
    fn default() -> Self {
        IlHyper { lr: 1e-3, batch_size: 64, epochs: 50, val_frac: 0.1 }
    }
}

impl IlHyper {
    pub fn validate(&self) -> Result<(), &'static str> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err("il.lr");
        }
        if self.batch_size == 0 {
            return Err("il.batch");
        }
        if self.epochs == 0 {
            return Err("il.epochs");
        }
        if !(self.val_frac > 0.0 && self.val_frac < 1.0) {
            return Err("il.val_frac");
        }
        Ok(())
    }
}

/// One row of the training curve.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IlEpoch {
    pub epoch: u32,
    pub train_mse: f64,
    pub val_mse: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum IlError {
    /// Fewer than two rows: nothing to split.
    DatasetTooSmall,
    /// Loss left the finite range; training aborted.
    Diverged { epoch: u32, batch: usize },
}

impl fmt::Display for IlError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IlError::DatasetTooSmall => {
                write!(f, "imitation training needs at least two dataset rows")
            }
            IlError::Diverged { epoch, batch } => write!(
                f,
                "imitation training diverged (non-finite loss) at epoch {epoch}, \
                 batch {batch}; lower il.lr or inspect the dataset"
            ),
        }
    }
}

impl core::error::Error for IlError {}

/// Stack dataset rows (by index) into an observation matrix [3 x B] and a
/// label row [1 x B].
fn batch_tensors(dataset: &Dataset, idxs: &[usize]) -> (Tensor, Tensor) {
    let b = idxs.len();
    let mut x = Tensor::zeros(3, b);
    let mut y = Tensor::zeros(1, b);
    for (j, &i) in idxs.iter().enumerate() {
        let row = &dataset.rows[i];
        for k in 0..3 {
            x.set(k, j, row.obs[k]);
        }
        y.set(0, j, row.action);
    }
    (x, y)
}

/// Batch MSE loss and its gradient with respect to the policy parameters.
pub fn il_loss(params: &MlpParams, x: &Tensor, y: &Tensor) -> (f64, MlpParams) {
    let mut tape = Tape::new();
    let vars = register_mlp(&mut tape, params);
    let input = tape.leaf(x.clone());
    let out = mlp_forward_tape(&mut tape, &vars, input);
    let target = tape.leaf(y.clone());
    let diff = tape.sub(out, target);
    let sq = tape.square(diff);
    let loss = tape.mean_all(sq);
    let value = tape.value(loss).item();
    let grads = tape.backward(loss).expect("scalar loss");
    (value, mlp_grad(&vars, &grads, params))
}

/// Mean squared error of a pure forward pass over the given rows.
fn mse_on(params: &MlpParams, dataset: &Dataset, idxs: &[usize]) -> f64 {
    let mut sum = 0.0;
    for chunk in idxs.chunks(VAL_CHUNK) {
        let (x, y) = batch_tensors(dataset, chunk);
        let out = params.forward(&x);
        for j in 0..chunk.len() {
            let d = out.get(0, j) - y.get(0, j);
            sum += d * d;
        }
    }
    sum / idxs.len() as f64
}

/// Train the following policy on a demonstration dataset.
///
/// Substreams of `root(seed) -> "il"`: `"init"` for parameter
/// initialization, `"split"` for the validation split, `"shuffle" -> epoch`
/// for per-epoch batch order. Returns the best-validation parameters and
/// the per-epoch curve.
pub fn train_il(
    dataset: &Dataset,
    hyper: &IlHyper,
    seed: u64,
) -> Result<(MlpParams, Vec<IlEpoch>), IlError> {
    let n = dataset.rows.len();
    if n < 2 {
        return Err(IlError::DatasetTooSmall);
    }
    let base = SeedStream::root(seed).child("il");

    let mut params = MlpParams::policy(3, &mut base.child("init").rng());
    let opt = RmsProp::new(hyper.lr);
    let mut opt_state = RmsPropState::new(&params);

    // Validation split: shuffle once, hold out the tail.
    let mut order: Vec<usize> = (0..n).collect();
    shuffle(&mut order, &mut base.child("split").rng());
    let n_val = ((hyper.val_frac * n as f64) as usize).clamp(1, n - 1);
    let val_idx: Vec<usize> = order[n - n_val..].to_vec();
    let mut train_idx: Vec<usize> = order[..n - n_val].to_vec();

    let shuffle_base = base.child("shuffle");
    let mut curve = Vec::with_capacity(hyper.epochs as usize);
    let mut best: Option<(f64, MlpParams)> = None;

    for epoch in 0..hyper.epochs {
        shuffle(&mut train_idx, &mut shuffle_base.child_idx(epoch as u64).rng());
        let mut weighted_loss = 0.0;
        for (bi, chunk) in train_idx.chunks(hyper.batch_size).enumerate() {
            let (x, y) = batch_tensors(dataset, chunk);
            let (loss, grads) = il_loss(&params, &x, &y);
            if !loss.is_finite() {
                return Err(IlError::Diverged { epoch, batch: bi });
            }
            weighted_loss += loss * chunk.len() as f64;
            if opt_state.step(&opt, &mut params, &grads) == UpdateOutcome::RejectedNonFinite {
                return Err(IlError::Diverged { epoch, batch: bi });
            }
        }
        let train_mse = weighted_loss / train_idx.len() as f64;
        let val_mse = mse_on(&params, dataset, &val_idx);
        if !val_mse.is_finite() {
            return Err(IlError::Diverged { epoch, batch: usize::MAX });
        }
        curve.push(IlEpoch { epoch, train_mse, val_mse });
        let better = match &best {
            None => true,
            Some((b, _)) => val_mse < *b,
        };
        if better {
            best = Some((val_mse, params.clone()));
        }
    }

    let (_, best_params) = best.expect("at least one epoch");
    Ok((best_params, curve))
}

/// Pedal command for one observation.
pub fn policy_action(params: &MlpParams, obs: &[f64; 3]) -> f64 {
    params.forward_one(obs)
}

/// In-place Fisher–Yates driven by the given stream.
fn shuffle(idxs: &mut [usize], rng: &mut impl rand::Rng) {
    use rand::seq::SliceRandom;
    idxs.shuffle(rng);
}
