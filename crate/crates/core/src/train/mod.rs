//! Training loop, learning-rate schedule and evaluation.

mod metrics;
mod report;

pub use metrics::{ClassMetrics, EvalReport};
pub use report::{write_confusion_csv, write_metrics_log_csv, write_report_csv, write_snr_csv};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::diffpool::{AvgNetParams, ModelConfig};
use crate::error::{Error, Result};
use crate::nn::{GradBuffer, Tape};
use crate::signal::{Dataset, LabeledFrame};

/// What the decay interval counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecayUnit {
    Epoch,
    Batch,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub initial_lr: f64,
    pub lr_decay: f64,
    pub decay_every: usize,
    pub decay_unit: DecayUnit,
    pub m: usize,
    pub hidden: usize,
    pub clusters: usize,
    pub seed: u64,
    /// Adds the pooling link-prediction and entropy penalties to the loss.
    pub aux_loss: bool,
    pub share_weights: bool,
    pub conv_bias: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 128,
            initial_lr: 0.001,
            lr_decay: 0.8,
            decay_every: 10,
            decay_unit: DecayUnit::Epoch,
            m: 11,
            hidden: 64,
            clusters: 32,
            seed: 0,
            aux_loss: false,
            share_weights: false,
            conv_bias: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("epochs", self.epochs),
            ("batch_size", self.batch_size),
            ("decay_every", self.decay_every),
            ("hidden", self.hidden),
            ("clusters", self.clusters),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(Error::InvalidArgument(format!("{name} must be positive")));
        }
        if !(self.initial_lr > 0.0 && self.initial_lr.is_finite()) {
            return Err(Error::InvalidArgument("initial_lr must be positive".into()));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return Err(Error::InvalidArgument("lr_decay must be in (0, 1]".into()));
        }
        if self.m < 2 {
            return Err(Error::InvalidArgument("m must be at least 2".into()));
        }
        Ok(())
    }

    pub fn model_config(&self, num_classes: usize) -> ModelConfig {
        ModelConfig {
            m: self.m,
            hidden: self.hidden,
            clusters: self.clusters,
            conv_bias: self.conv_bias,
            share_weights: self.share_weights,
            ..ModelConfig::new(num_classes)
        }
    }
}

/// `initial_lr · lr_decay^⌊epoch / decay_every⌋`.
pub fn lr_at(epoch: usize, cfg: &TrainConfig) -> f64 {
    cfg.initial_lr * cfg.lr_decay.powi((epoch / cfg.decay_every) as i32)
}

/// Learning rate for a batch, honouring [`TrainConfig::decay_unit`].
/// `global_batch` counts batches from the start of training.
pub fn lr_for_batch(epoch: usize, global_batch: usize, cfg: &TrainConfig) -> f64 {
    match cfg.decay_unit {
        DecayUnit::Epoch => lr_at(epoch, cfg),
        DecayUnit::Batch => lr_at(global_batch, cfg),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_accuracy: f64,
    /// Learning rate of the epoch's first batch.
    pub lr: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters of the epoch with the highest validation accuracy.
    pub params: AvgNetParams,
    pub best_epoch: usize,
    pub log: Vec<EpochLog>,
}

impl TrainOutcome {
    pub fn best_val_accuracy(&self) -> f64 {
        self.log[self.best_epoch].val_accuracy
    }
}

fn check_compatible(a: &Dataset, b: &Dataset) -> Result<()> {
    if a.class_names() != b.class_names() {
        return Err(Error::DatasetMismatch("class names differ".into()));
    }
    if a.frame_length() != b.frame_length() {
        return Err(Error::DatasetMismatch(format!(
            "frame lengths differ ({} vs {})",
            a.frame_length(),
            b.frame_length()
        )));
    }
    Ok(())
}

/// Trains a fresh network. See [`train_with`].
pub fn train(train_set: &Dataset, val_set: &Dataset, cfg: &TrainConfig) -> Result<TrainOutcome> {
    train_with(train_set, val_set, cfg, |_| {})
}

/// Trains a fresh network with mini-batch Adam on mean cross-entropy,
/// calling `on_epoch` after each epoch. Gradients of a batch are summed in
/// sample order, so runs with equal seeds are identical.
pub fn train_with(
    train_set: &Dataset,
    val_set: &Dataset,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    check_compatible(train_set, val_set)?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if train_set.frame_length() < cfg.m {
        return Err(Error::SeriesTooShort {
            len: train_set.frame_length(),
            min: cfg.m,
        });
    }
    let mut params = AvgNetParams::init(cfg.model_config(train_set.num_classes()), cfg.seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x005E_ED0F_5A11);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut grads = GradBuffer::zeros_like(params.store());
    let mut log = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(usize, f64, AvgNetParams)> = None;
    let mut global_batch = 0;

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let epoch_lr = lr_for_batch(epoch, global_batch, cfg);
        for batch in order.chunks(cfg.batch_size) {
            grads.clear();
            let scale = 1.0 / batch.len() as f64;
            for &idx in batch {
                let frame = &train_set.frames()[idx];
                loss_sum += sample_gradient(&params, frame, cfg.aux_loss, &mut grads, scale)?;
            }
            let lr = lr_for_batch(epoch, global_batch, cfg);
            params.store_mut().adam_step(&grads, lr)?;
            global_batch += 1;
        }
        let val_accuracy = evaluate(val_set, &params)?.accuracy;
        let entry = EpochLog {
            epoch,
            train_loss: loss_sum / train_set.len() as f64,
            val_accuracy,
            lr: epoch_lr,
        };
        on_epoch(&entry);
        log.push(entry);
        if best.as_ref().is_none_or(|(_, acc, _)| val_accuracy > *acc) {
            best = Some((epoch, val_accuracy, params.clone()));
        }
    }
    let (best_epoch, _, params) = best.expect("at least one epoch");
    Ok(TrainOutcome {
        params,
        best_epoch,
        log,
    })
}

/// Adds `scale` times the gradient of one sample's loss into `grads` and
/// returns the loss (classification part only).
pub(crate) fn sample_gradient(
    params: &AvgNetParams,
    frame: &LabeledFrame,
    aux_loss: bool,
    grads: &mut GradBuffer,
    scale: f64,
) -> Result<f64> {
    let mut tape = Tape::new();
    let out = params.forward_on_tape(&mut tape, &frame.frame, aux_loss)?;
    let ce = tape.cross_entropy(out.logits, &[frame.label])?;
    let loss = tape.value(ce).get(0, 0);
    let total = if aux_loss { tape.add(ce, out.aux)? } else { ce };
    let g = tape.backward(total)?;
    g.accumulate_into(grads, scale);
    Ok(loss)
}

/// Mean loss over `dataset` and its gradient, without updating anything.
pub fn loss_and_gradient(
    dataset: &Dataset,
    params: &AvgNetParams,
    aux_loss: bool,
) -> Result<(f64, GradBuffer)> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut grads = GradBuffer::zeros_like(params.store());
    let scale = 1.0 / dataset.len() as f64;
    let mut loss = 0.0;
    for frame in dataset.frames() {
        loss += scale * sample_gradient(params, frame, aux_loss, &mut grads, scale)?;
    }
    Ok((loss, grads))
}

fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (k, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = k;
        }
    }
    best
}

/// Predicted class of every frame, in dataset order.
pub fn predict(dataset: &Dataset, params: &AvgNetParams) -> Result<Vec<usize>> {
    dataset
        .frames()
        .par_iter()
        .map(|f| crate::diffpool::avgnet_forward(&f.frame, params).map(|logits| argmax(&logits)))
        .collect()
}

/// Accuracy, F1, recall, per-SNR accuracy and confusion of `params` on `dataset`.
pub fn evaluate(dataset: &Dataset, params: &AvgNetParams) -> Result<EvalReport> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if params.config().num_classes != dataset.num_classes() {
        return Err(Error::DatasetMismatch(format!(
            "model has {} classes, dataset has {}",
            params.config().num_classes,
            dataset.num_classes()
        )));
    }
    let predicted = predict(dataset, params)?;
    let truth: Vec<usize> = dataset.frames().iter().map(|f| f.label).collect();
    let snr: Vec<i8> = dataset.frames().iter().map(|f| f.snr_db).collect();
    EvalReport::from_predictions(dataset.num_classes(), &truth, &predicted, &snr)
}
