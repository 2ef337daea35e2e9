use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{HarnessError, TrainConfig};
use crate::adapter::{AdapterParams, EmbeddedSet};
use crate::backbone::Backbone;
use crate::numerics::{Adam, Graph, NodeId, NumericsError, Tensor2};

/// Patience bookkeeping over validation losses.
#[derive(Clone, Debug)]
pub struct EarlyStopping {
    patience: usize,
    best: Option<(usize, f64)>,
    since_best: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self { patience, best: None, since_best: 0 }
    }

    /// Records the validation loss of `epoch`; returns true once `patience`
    /// consecutive epochs have failed to improve strictly on the best.
    pub fn observe(&mut self, epoch: usize, val: f64) -> bool {
        match self.best {
            Some((_, b)) if !(val < b) => self.since_best += 1,
            _ if val.is_nan() => self.since_best += 1,
            _ => {
                self.best = Some((epoch, val));
                self.since_best = 0;
            }
        }
        self.since_best >= self.patience
    }

    pub fn best_epoch(&self) -> Option<usize> {
        self.best.map(|b| b.0)
    }

    pub fn best_value(&self) -> Option<f64> {
        self.best.map(|b| b.1)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Mean minibatch loss; absent for epoch 0 (the initial parameters).
    pub train_loss: Option<f64>,
    pub val_mse: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LrRun {
    pub lr: f64,
    pub epochs: Vec<EpochLog>,
    pub best_epoch: usize,
    pub best_val_mse: f64,
    pub stopped_early: bool,
    pub steps: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub runs: Vec<LrRun>,
    pub chosen_lr: f64,
    pub best_val_mse: f64,
}

impl TrainingLog {
    pub fn chosen(&self) -> &LrRun {
        self.runs.iter().find(|r| r.lr == self.chosen_lr).expect("chosen run is logged")
    }
}

/// Mean squared error of the adapter on a whole set, on the normalized scale.
pub fn set_mse(params: &AdapterParams, bb: &Backbone, set: &EmbeddedSet) -> Result<f64, HarnessError> {
    let (pred, _) = params.forward_batch(bb, &set.covariates, &set.target)?;
    let d = pred.sub(&set.truth)?;
    Ok(d.data().iter().map(|v| v * v).sum::<f64>() / d.len() as f64)
}

/// Minibatch loss graph; returns the loss node and the parameter leaves.
pub fn record_batch_loss(
    params: &AdapterParams,
    bb: &Backbone,
    batch: &EmbeddedSet,
    g: &mut Graph,
) -> Result<(NodeId, Vec<NodeId>), HarnessError> {
    let bound = params.store().register(g);
    let xs: Vec<NodeId> =
        if params.variant().uses_covariates() { batch.covariates.iter().map(|x| g.constant(x.clone())).collect() } else { Vec::new() };
    let t = g.constant(batch.target.clone());
    let out = params.record_forward(g, &bound, bb, &xs, t)?;
    let truth = g.constant(batch.truth.clone());
    let loss = g.mse(out.forecast, truth)?;
    Ok((loss, bound.ids().collect()))
}

/// One optimizer step on `batch`; returns the loss before the step.
pub fn train_step(
    params: &mut AdapterParams,
    bb: &Backbone,
    batch: &EmbeddedSet,
    adam: &mut Adam,
) -> Result<f64, HarnessError> {
    let mut g = Graph::new();
    let (loss, ids) = record_batch_loss(params, bb, batch, &mut g)?;
    let value = g.value(loss).get(0, 0);
    let grads = g.backward(loss)?;
    let gs: Vec<Tensor2> = ids.iter().zip(params.store().tensors()).map(|(&id, p)| grads.get_or_zeros(id, p)).collect();
    adam.step(&mut params.store_mut().tensors_mut(), &gs)?;
    Ok(value)
}

fn diverged(step: usize, e: HarnessError) -> HarnessError {
    match e {
        HarnessError::Adapter(crate::adapter::AdapterError::Numerics(NumericsError::NonFinite(m)))
        | HarnessError::Numerics(NumericsError::NonFinite(m)) => HarnessError::Diverged { step, message: m },
        other => other,
    }
}

fn train_one_lr(
    cfg: &TrainConfig,
    lr: f64,
    bb: &Backbone,
    init: &AdapterParams,
    train: &EmbeddedSet,
    val: &EmbeddedSet,
    seed: u64,
) -> Result<(AdapterParams, LrRun), HarnessError> {
    let mut params = init.clone();
    let mut best = init.clone();
    let mut adam = Adam::new(lr);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut stopper = EarlyStopping::new(cfg.patience);
    let v0 = set_mse(&params, bb, val)?;
    stopper.observe(0, v0);
    let mut epochs = vec![EpochLog { epoch: 0, train_loss: None, val_mse: v0 }];
    let mut step = 0;
    let mut stopped_early = false;
    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut count = 0;
        for chunk in order.chunks(cfg.batch_size) {
            step += 1;
            let batch = train.select(chunk);
            let loss = train_step(&mut params, bb, &batch, &mut adam).map_err(|e| diverged(step, e))?;
            if !loss.is_finite() {
                return Err(HarnessError::Diverged { step, message: format!("loss {loss}") });
            }
            total += loss;
            count += 1;
        }
        let v = set_mse(&params, bb, val).map_err(|e| diverged(step, e))?;
        epochs.push(EpochLog { epoch, train_loss: Some(total / count as f64), val_mse: v });
        let stop = stopper.observe(epoch, v);
        if stopper.best_epoch() == Some(epoch) {
            best = params.clone();
        }
        if stop {
            stopped_early = true;
            break;
        }
    }
    let run = LrRun {
        lr,
        epochs,
        best_epoch: stopper.best_epoch().unwrap_or(0),
        best_val_mse: stopper.best_value().unwrap_or(f64::NAN),
        stopped_early,
        steps: step,
    };
    Ok((best, run))
}

/// Minibatch MSE training of the adapter with per-epoch validation, early
/// stopping and a learning-rate grid. The backbone is only read. Every grid
/// point uses the same shuffle schedule, derived from `seed`; the returned
/// parameters are those of the epoch with the lowest validation MSE across
/// the grid (the initial parameters count as epoch 0).
pub fn train_adapter(
    cfg: &TrainConfig,
    bb: &Backbone,
    init: &AdapterParams,
    train: &EmbeddedSet,
    val: &EmbeddedSet,
    seed: u64,
) -> Result<(AdapterParams, TrainingLog), HarnessError> {
    if val.is_empty() {
        return Err(HarnessError::Config("validation set is empty".into()));
    }
    if train.is_empty() {
        return Err(HarnessError::Config("training set is empty".into()));
    }
    if cfg.lr_grid.is_empty() || cfg.patience == 0 || cfg.batch_size == 0 {
        return Err(HarnessError::Config("lr grid, patience and batch size must be non-empty/positive".into()));
    }
    let mut best: Option<(AdapterParams, f64, f64)> = None;
    let mut runs = Vec::with_capacity(cfg.lr_grid.len());
    for &lr in &cfg.lr_grid {
        let (p, run) = train_one_lr(cfg, lr, bb, init, train, val, seed)?;
        if best.as_ref().is_none_or(|b| run.best_val_mse < b.1) {
            best = Some((p, run.best_val_mse, lr));
        }
        runs.push(run);
    }
    let (params, best_val_mse, chosen_lr) = best.expect("grid is non-empty");
    Ok((params, TrainingLog { runs, chosen_lr, best_val_mse }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn patience_example() {
        let mut s = EarlyStopping::new(3);
        let stops: Vec<bool> = [5.0, 4.0, 4.1, 4.2, 4.3].iter().enumerate().map(|(i, &v)| s.observe(i + 1, v)).collect();
        assert_eq!(stops, vec![false, false, false, false, true]);
        assert_eq!(s.best_epoch(), Some(2));
        assert_eq!(s.best_value(), Some(4.0));
    }

    #[test]
    fn equal_loss_is_not_improvement() {
        let mut s = EarlyStopping::new(1);
        assert!(!s.observe(0, 1.0));
        assert!(s.observe(1, 1.0));
        assert_eq!(s.best_epoch(), Some(0));
    }

    #[test]
    fn nan_never_becomes_best() {
        let mut s = EarlyStopping::new(2);
        s.observe(0, f64::NAN);
        assert_eq!(s.best_epoch(), None);
        s.observe(1, 3.0);
        assert_eq!(s.best_epoch(), Some(1));
    }
}
