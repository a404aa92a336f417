//! Seeded mini-batch training with per-epoch records and checkpoints.

mod curves;
mod optim;

use serde::{Deserialize, Serialize};

pub use curves::{
    emit_curves, fmt_sig6, format_curves, parse_curves, read_curves, round_sig6, CURVES_HEADER,
};
pub use optim::{
    adam_step, clip_global_norm, sgd_momentum_step, AdamParams, Optimizer, OptimizerKind,
};

use crate::data::{batch_iterator, LabeledDataset};
use crate::error::{Error, Result};
use crate::layers::softmax_cross_entropy;
use crate::metrics::{argmax, check_classes, predict_dataset};
use crate::network::{Checkpoint, CheckpointMetadata, Network, NetworkSpec};
use crate::rng::{streams, Rng};

/// Multiplies the learning rate by `gamma` every `every` epochs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepDecay {
    pub every: usize,
    pub gamma: f64,
}

mod defaults {
    use super::OptimizerKind;

    pub fn batch_size() -> usize {
        32
    }
    pub fn learning_rate() -> f64 {
        1e-3
    }
    pub fn optimizer() -> OptimizerKind {
        OptimizerKind::Adam
    }
    pub fn momentum() -> f64 {
        0.9
    }
    pub fn beta1() -> f64 {
        0.9
    }
    pub fn beta2() -> f64 {
        0.999
    }
    pub fn adam_eps() -> f64 {
        1e-8
    }
    pub fn eval_every() -> usize {
        1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    #[serde(default = "defaults::batch_size")]
    pub batch_size: usize,
    #[serde(default = "defaults::learning_rate")]
    pub learning_rate: f64,
    #[serde(default = "defaults::optimizer")]
    pub optimizer: OptimizerKind,
    #[serde(default = "defaults::momentum")]
    pub momentum: f64,
    #[serde(default = "defaults::beta1")]
    pub beta1: f64,
    #[serde(default = "defaults::beta2")]
    pub beta2: f64,
    #[serde(default = "defaults::adam_eps")]
    pub adam_eps: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "defaults::eval_every")]
    pub eval_every: usize,
    #[serde(default)]
    pub lr_decay: Option<StepDecay>,
    #[serde(default)]
    pub clip_norm: Option<f64>,
}

impl TrainConfig {
    pub fn new(epochs: usize) -> Self {
        Self {
            epochs,
            batch_size: defaults::batch_size(),
            learning_rate: defaults::learning_rate(),
            optimizer: defaults::optimizer(),
            momentum: defaults::momentum(),
            beta1: defaults::beta1(),
            beta2: defaults::beta2(),
            adam_eps: defaults::adam_eps(),
            seed: 0,
            eval_every: defaults::eval_every(),
            lr_decay: None,
            clip_norm: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidArgument(msg));
        if self.epochs < 1 {
            return fail("epochs must be at least 1".into());
        }
        if self.batch_size < 1 {
            return fail("batch_size must be at least 1".into());
        }
        if self.eval_every < 1 {
            return fail("eval_every must be at least 1".into());
        }
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                fail(format!("{name} must be positive, got {v}"))
            }
        };
        positive("learning_rate", self.learning_rate)?;
        positive("adam_eps", self.adam_eps)?;
        for (name, v) in [
            ("momentum", self.momentum),
            ("beta1", self.beta1),
            ("beta2", self.beta2),
        ] {
            if !(0.0..1.0).contains(&v) {
                return fail(format!("{name} must be in [0, 1), got {v}"));
            }
        }
        if let Some(d) = self.lr_decay {
            if d.every < 1 {
                return fail("lr_decay.every must be at least 1".into());
            }
            positive("lr_decay.gamma", d.gamma)?;
        }
        if let Some(c) = self.clip_norm {
            positive("clip_norm", c)?;
        }
        Ok(())
    }

    /// Learning rate for a 1-based epoch.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        match self.lr_decay {
            Some(d) => self.learning_rate * d.gamma.powi(((epoch - 1) / d.every) as i32),
            None => self.learning_rate,
        }
    }

    pub fn adam_params(&self) -> AdamParams {
        AdamParams {
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.adam_eps,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_loss: Option<f64>,
    pub val_acc: Option<f64>,
}

impl EpochRecord {
    /// `epoch <e>/<E> train_loss=<x> train_acc=<y> [val_loss=<z> val_acc=<w>]`
    pub fn progress_line(&self, total_epochs: usize) -> String {
        let mut line = format!(
            "epoch {}/{} train_loss={:.6} train_acc={:.4}",
            self.epoch, total_epochs, self.train_loss, self.train_acc
        );
        if let (Some(l), Some(a)) = (self.val_loss, self.val_acc) {
            line.push_str(&format!(" val_loss={l:.6} val_acc={a:.4}"));
        }
        line
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub final_checkpoint: Checkpoint,
    /// Highest validation accuracy, ties to the earlier epoch. Equal to the
    /// final checkpoint when there is no validation set.
    pub best_checkpoint: Checkpoint,
    pub best_epoch: usize,
    pub records: Vec<EpochRecord>,
}

/// Network initialized from the seed's own stream.
pub fn init_network(spec: NetworkSpec, seed: u64) -> Result<Network> {
    Network::build(spec, &mut Rng::stream(seed, streams::INIT))
}

/// Runs `cfg.epochs` epochs. Shuffling and dropout draw from separate
/// streams of `cfg.seed`, so the whole run is a function of its inputs.
/// `observer` sees every record as soon as its epoch finishes.
pub fn train(
    mut net: Network,
    train_ds: &LabeledDataset,
    val_ds: Option<&LabeledDataset>,
    cfg: &TrainConfig,
    mut observer: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    check_classes(&net, train_ds)?;
    if let Some(val) = val_ds {
        check_classes(&net, val)?;
    }
    if train_ds.is_empty() {
        return Err(Error::Data("training set is empty".into()));
    }
    let spec = net.spec().clone();
    let mut shuffle_rng = Rng::stream(cfg.seed, streams::SHUFFLE);
    let mut dropout_rng = Rng::stream(cfg.seed, streams::DROPOUT);
    let mut optimizer = Optimizer::new(cfg.optimizer, cfg.momentum, cfg.adam_params(), &net);
    let mut records = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, usize, Network)> = None;

    for epoch in 1..=cfg.epochs {
        let lr = cfg.lr_at(epoch);
        let (mut loss_sum, mut correct) = (0.0, 0usize);
        let batches = batch_iterator(train_ds, &spec, cfg.batch_size, &mut shuffle_rng, true)?;
        for (index, batch) in batches.enumerate() {
            let batch = batch?;
            let (logits, trace) = net.forward_train(&batch.inputs, &mut dropout_rng)?;
            let out = softmax_cross_entropy(&logits, &batch.labels)?;
            if !out.loss.is_finite() {
                return Err(Error::Divergence {
                    epoch,
                    batch: index + 1,
                    loss: out.loss,
                });
            }
            let mut grads = net.backward(&trace, &out.grad_logits)?;
            if let Some(max_norm) = cfg.clip_norm {
                clip_global_norm(&mut grads, max_norm);
            }
            optimizer.step(&mut net, &grads, lr)?;
            loss_sum += out.loss * batch.labels.len() as f64;
            correct += logits
                .data()
                .chunks(spec.n_classes)
                .zip(&batch.labels)
                .filter(|(row, &label)| argmax(row) == label)
                .count();
        }
        let n = train_ds.len() as f64;
        let mut record = EpochRecord {
            epoch,
            train_loss: loss_sum / n,
            train_acc: correct as f64 / n,
            val_loss: None,
            val_acc: None,
        };
        if let Some(val) = val_ds.filter(|_| epoch % cfg.eval_every == 0 || epoch == cfg.epochs) {
            let preds = predict_dataset(&net, val, cfg.batch_size)?;
            let acc = preds.accuracy();
            record.val_loss = Some(preds.loss);
            record.val_acc = Some(acc);
            if best.as_ref().is_none_or(|(b, _, _)| acc > *b) {
                best = Some((acc, epoch, net.clone()));
            }
        }
        observer(&record);
        records.push(record);
    }

    let metadata = |epochs_trained| CheckpointMetadata {
        seed: cfg.seed,
        epochs_trained,
    };
    let (best_epoch, best_net) = match best {
        Some((_, epoch, snapshot)) => (epoch, snapshot),
        None => (cfg.epochs, net.clone()),
    };
    Ok(TrainOutcome {
        final_checkpoint: Checkpoint::new(net, metadata(cfg.epochs)),
        best_checkpoint: Checkpoint::new(best_net, metadata(best_epoch)),
        best_epoch,
        records,
    })
}
