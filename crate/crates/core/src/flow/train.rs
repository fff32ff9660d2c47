//! Maximum-likelihood training with Adam.

use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::model::{std_normal_log_prob, Workspace, GRAD_CHUNK};
use super::{FlowArch, FlowError, FlowModel};
use crate::featurize::{Context, Sample, ACTION_DIM};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub arch: FlowArch,
    pub batch_size: usize,
    /// Initial Adam step size.
    pub learning_rate: f64,
    pub max_epochs: usize,
    /// Non-improving epochs before the learning rate is halved.
    pub lr_patience: usize,
    /// Non-improving epochs before training stops.
    pub early_stop_patience: usize,
    /// Standard deviation of the Gaussian dequantization noise.
    pub dequant_sigma: f64,
    /// Fraction of training episodes held out when no validation set is given.
    pub validation_split: f64,
    /// Re-permute context rows every epoch.
    pub reshuffle_context: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            arch: FlowArch::default(),
            batch_size: 64,
            learning_rate: 5e-4,
            max_epochs: 400,
            lr_patience: 20,
            early_stop_patience: 60,
            dequant_sigma: 1e-3,
            validation_split: 0.2,
            reshuffle_context: false,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), FlowError> {
        self.arch.validate()?;
        let ok = self.batch_size > 0
            && self.learning_rate > 0.0
            && self.learning_rate.is_finite()
            && self.max_epochs > 0
            && self.lr_patience > 0
            && self.early_stop_patience > 0
            && self.dequant_sigma >= 0.0
            && self.dequant_sigma.is_finite()
            && (0.0..1.0).contains(&self.validation_split);
        if ok {
            Ok(())
        } else {
            Err(FlowError::Param(format!("invalid training config {self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Mean log-density of the dequantized training samples.
    pub train_log_prob: f64,
    /// Mean log-density of the noiseless validation samples.
    pub val_log_prob: f64,
    pub learning_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochLog>,
    pub best_epoch: usize,
    pub best_val_log_prob: f64,
    /// Validation mean of `log N(a; 0, I)`, the identity-flow score.
    pub baseline_val_log_prob: f64,
    pub stopped_early: bool,
    pub n_train: usize,
    pub n_val: usize,
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - Self::B1.powi(self.t);
        let c2 = 1.0 - Self::B2.powi(self.t);
        for (((p, g), m), v) in params.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
            *m = Self::B1 * *m + (1.0 - Self::B1) * g;
            *v = Self::B2 * *v + (1.0 - Self::B2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + Self::EPS);
        }
    }
}

/// Splits samples by episode: the last `fraction` of distinct episodes
/// (in first-appearance order) become the validation set.
pub fn split_validation(samples: &[Sample], fraction: f64) -> (Vec<Sample>, Vec<Sample>) {
    let mut episodes: Vec<u64> = Vec::new();
    for s in samples {
        if episodes.last() != Some(&s.episode) && !episodes.contains(&s.episode) {
            episodes.push(s.episode);
        }
    }
    let n_val = ((episodes.len() as f64) * fraction).round() as usize;
    let held: Vec<u64> = episodes[episodes.len() - n_val..].to_vec();
    samples.iter().cloned().partition(|s| !held.contains(&s.episode))
}

/// Mean log-density of noiseless samples.
pub fn mean_log_prob(model: &FlowModel, samples: &[Sample]) -> Result<f64, FlowError> {
    if samples.is_empty() {
        return Err(FlowError::Param("empty sample set".into()));
    }
    let sums: Vec<Result<f64, FlowError>> = samples
        .par_chunks(GRAD_CHUNK)
        .map(|chunk| {
            let mut ws = Workspace::default();
            chunk.iter().try_fold(0.0, |acc, s| Ok(acc + model.log_prob_with(&s.action, &s.context, &mut ws)?))
        })
        .collect();
    let mut total = 0.0;
    for s in sums {
        total += s?;
    }
    Ok(total / samples.len() as f64)
}

const TRAIN_TAG: u64 = 0x5452_4149;

/// Trains a fresh model. See [`train_from`].
pub fn train(
    train_set: &[Sample],
    val_set: &[Sample],
    cfg: &TrainConfig,
    on_epoch: &mut dyn FnMut(&EpochLog),
) -> Result<(FlowModel, TrainLog), FlowError> {
    let model = FlowModel::new(cfg.arch.clone(), &mut rng::stream(cfg.seed, &[TRAIN_TAG]))?;
    train_from(model, train_set, val_set, cfg, on_epoch)
}

/// Continues training `model` and returns the best-validation parameters.
/// An empty `val_set` holds out `validation_split` of the training episodes.
pub fn train_from(
    mut model: FlowModel,
    train_set: &[Sample],
    val_set: &[Sample],
    cfg: &TrainConfig,
    on_epoch: &mut dyn FnMut(&EpochLog),
) -> Result<(FlowModel, TrainLog), FlowError> {
    cfg.validate()?;
    let (train_owned, val_owned);
    let (train_set, val_set) = if val_set.is_empty() {
        (train_owned, val_owned) = split_validation(train_set, cfg.validation_split);
        (&train_owned[..], &val_owned[..])
    } else {
        (train_set, val_set)
    };
    if train_set.is_empty() || val_set.is_empty() {
        return Err(FlowError::Param("training and validation sets must be non-empty".into()));
    }
    let baseline = val_set.iter().map(|s| std_normal_log_prob(&s.action.0)).sum::<f64>() / val_set.len() as f64;

    let mut adam = Adam::new(model.n_params());
    let mut lr = cfg.learning_rate;
    let mut best = mean_log_prob(&model, val_set)?;
    let mut best_params = model.params().to_vec();
    let mut best_epoch = 0;
    let mut since_best = 0;
    let mut since_halving = 0;
    let mut log = Vec::new();
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut stopped_early = false;

    for epoch in 1..=cfg.max_epochs {
        let mut r = rng::stream(cfg.seed, &[TRAIN_TAG, epoch as u64]);
        order.shuffle(&mut r);
        let mut epoch_nll = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let contexts: Vec<Context> = if cfg.reshuffle_context {
                batch
                    .iter()
                    .map(|&i| {
                        let mut c = train_set[i].context.clone();
                        c.shuffle(&mut r);
                        c
                    })
                    .collect()
            } else {
                Vec::new()
            };
            let items: Vec<([f64; ACTION_DIM], &Context)> = batch
                .iter()
                .enumerate()
                .map(|(bi, &i)| {
                    let s = &train_set[i];
                    let mut a = s.action.0;
                    for v in &mut a {
                        let n: f64 = StandardNormal.sample(&mut r);
                        *v += cfg.dequant_sigma * n;
                    }
                    let ctx = if cfg.reshuffle_context { &contexts[bi] } else { &s.context };
                    (a, ctx)
                })
                .collect();
            let (sum, mut grad) = model.nll_sum_and_grad(&items).map_err(|e| FlowError::Diverged {
                epoch,
                msg: e.to_string(),
            })?;
            if !sum.is_finite() {
                return Err(FlowError::Diverged {
                    epoch,
                    msg: format!("loss {sum}"),
                });
            }
            epoch_nll += sum;
            let inv = 1.0 / batch.len() as f64;
            grad.iter_mut().for_each(|g| *g *= inv);
            adam.step(model.params_mut(), &grad, lr);
        }
        let val = mean_log_prob(&model, val_set).map_err(|e| FlowError::Diverged {
            epoch,
            msg: e.to_string(),
        })?;
        let entry = EpochLog {
            epoch,
            train_log_prob: -epoch_nll / train_set.len() as f64,
            val_log_prob: val,
            learning_rate: lr,
        };
        on_epoch(&entry);
        log.push(entry);
        if val > best {
            best = val;
            best_params.copy_from_slice(model.params());
            best_epoch = epoch;
            since_best = 0;
            since_halving = 0;
        } else {
            since_best += 1;
            since_halving += 1;
            if since_best >= cfg.early_stop_patience {
                stopped_early = true;
                break;
            }
            if since_halving >= cfg.lr_patience {
                lr *= 0.5;
                since_halving = 0;
            }
        }
    }
    model.params_mut().copy_from_slice(&best_params);
    Ok((
        model,
        TrainLog {
            epochs: log,
            best_epoch,
            best_val_log_prob: best,
            baseline_val_log_prob: baseline,
            stopped_early,
            n_train: train_set.len(),
            n_val: val_set.len(),
        },
    ))
}
