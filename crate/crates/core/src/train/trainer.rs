//! Training loop: an Adam phase followed by SGD fine-tuning, with dev-set
//! model selection.
//!
//! All randomness is derived from `(seed, epoch, utterance)`, and each
//! utterance gets its own graph; gradients are summed in dataset order.
//! The result is therefore independent of the number of worker threads and
//! of whether training was interrupted and resumed between epochs.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use super::checkpoint::Checkpoint;
use super::config::{Config, EarlyStopMetric, LossReduction};
use super::dataset::{Dataset, Utterance};
use super::model::Model;
use super::optim::{l2_penalty, AdamSettings, OptimizerState};
use super::per::{PerStats, PhoneMap};
use crate::ctc::{best_path_decode, ctc_loss, ctc_loss_node, min_frames};
use crate::error::{Error, Result};
use crate::params::{Mode, ParamGrads, ParamStore, Session};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Adam,
    Sgd,
}

impl Phase {
    pub fn name(self) -> &'static str {
        match self {
            Phase::Adam => "adam",
            Phase::Sgd => "sgd",
        }
    }
}

/// Summary of one epoch; [`EpochRecord::log_line`] renders it as
/// `key=value` pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub phase: Phase,
    pub lr: f64,
    /// Mean CTC loss per trained utterance (dropout active).
    pub train_loss: f64,
    pub l2_penalty: f64,
    pub trained: usize,
    pub skipped: Vec<String>,
    pub dev: Option<EvalReport>,
    pub improved: bool,
    pub seconds: f64,
}

impl EpochRecord {
    pub fn log_line(&self) -> String {
        let mut s = format!(
            "epoch={} phase={} lr={:e} train_loss={:.6} l2={:.6e} utts={} skipped={}",
            self.epoch,
            self.phase.name(),
            self.lr,
            self.train_loss,
            self.l2_penalty,
            self.trained,
            self.skipped.len()
        );
        if let Some(d) = &self.dev {
            s.push_str(&format!(" dev_loss={:.6} dev_per={:.6} dev_skipped={}", d.loss, d.per(), d.skipped.len()));
        }
        s.push_str(&format!(" best={} time_s={:.2}", self.improved, self.seconds));
        if !self.skipped.is_empty() {
            s.push_str(&format!(" skipped_ids={}", self.skipped.join(",")));
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EvalReport {
    /// Mean CTC loss over scored utterances.
    pub loss: f64,
    pub stats: PerStats,
    /// Utterances too short for their transcription; they count as full
    /// deletions in the PER but are left out of the loss.
    pub skipped: Vec<String>,
}

impl EvalReport {
    pub fn per(&self) -> f64 {
        self.stats.per()
    }
}

/// Decoded label indices for one utterance.
pub fn decode(model: &Model, utt: &Utterance) -> Result<Vec<usize>> {
    let logits = model.logits(utt.features.quaternions())?;
    best_path_decode(&logits, model.symbols().blank())
}

/// Inference-mode loss and PER over `data`, scored after `map` folding.
pub fn evaluate(model: &Model, data: &Dataset, map: &PhoneMap) -> Result<EvalReport> {
    let blank = model.symbols().blank();
    let per_utt: Vec<Result<(Option<f64>, Vec<usize>)>> = data
        .utterances
        .par_iter()
        .map(|u| {
            let logits = model.logits(u.features.quaternions())?;
            let hyp = best_path_decode(&logits, blank)?;
            let loss = if min_frames(&u.labels) <= u.n_frames() {
                Some(ctc_loss(&logits, &u.labels, blank)?.loss)
            } else {
                None
            };
            Ok((loss, hyp))
        })
        .collect();
    let symbols = model.symbols();
    let mut report = EvalReport::default();
    let mut loss_sum = 0.0;
    let mut scored = 0;
    for (u, r) in data.utterances.iter().zip(per_utt) {
        let (loss, hyp) = r?;
        match loss {
            Some(l) => {
                loss_sum += l;
                scored += 1;
            }
            None => report.skipped.push(u.id.clone()),
        }
        let reference = map.apply(symbols.decode(&u.labels));
        let hyp = map.apply(symbols.decode(&hyp));
        report.stats.add(&reference, &hyp);
    }
    report.loss = if scored > 0 { loss_sum / scored as f64 } else { 0.0 };
    Ok(report)
}

/// A fresh RNG for `(seed, tag, a, b)`.
fn derived_rng(seed: u64, tag: &str, a: u64, b: u64) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(tag.as_bytes());
    h.update(a.to_le_bytes());
    h.update(b.to_le_bytes());
    ChaCha8Rng::from_seed(h.finalize().into())
}

fn utterance_grads(model: &Model, utt: &Utterance, rng: ChaCha8Rng) -> Result<(f64, ParamGrads)> {
    let mut sess = Session::new(&model.store, Mode::Train(Box::new(rng)));
    let logits = model.forward(&mut sess, utt.features.quaternions())?;
    let loss = ctc_loss_node(&mut sess.graph, logits, &utt.labels, model.symbols().blank())?;
    let value = sess.graph.value(loss).item().unwrap_or(f64::NAN);
    if !value.is_finite() {
        return Err(Error::NonFinite { param: format!("loss of {}", utt.id), count: 1 });
    }
    Ok((value, sess.param_grads(loss)?))
}

pub struct Trainer {
    pub model: Model,
    pub config: Config,
    pub optimizer: OptimizerState,
    pub epochs_done: usize,
    pub best_dev: Option<f64>,
    pub stale_epochs: usize,
    pub best_params: ParamStore,
    phone_map: PhoneMap,
    pool: rayon::ThreadPool,
}

impl Trainer {
    pub fn new(config: Config) -> Result<Self> {
        config.validate()?;
        let model = Model::build(&config.model, config.training.seed)?;
        let optimizer = OptimizerState::new(&model.store);
        let best_params = model.store.clone();
        Self::assemble(config, model, optimizer, 0, None, 0, best_params)
    }

    /// Resumes from `ckpt`; `config` may change training settings but not
    /// the architecture or features.
    pub fn resume(config: Config, ckpt: Checkpoint, best: Option<ParamStore>) -> Result<Self> {
        config.validate()?;
        ckpt.check_config(&config)?;
        let mut model = Model::build(&config.model, config.training.seed)?;
        if !model.same_layout(&ckpt.params) {
            return Err(Error::ConfigMismatch);
        }
        model.store = ckpt.params;
        let best_params = match best {
            Some(b) if model.same_layout(&b) => b,
            Some(_) => return Err(Error::ConfigMismatch),
            None => model.store.clone(),
        };
        Self::assemble(config, model, ckpt.optimizer, ckpt.epochs_done, ckpt.best_dev, ckpt.stale_epochs, best_params)
    }

    fn assemble(
        config: Config,
        model: Model,
        optimizer: OptimizerState,
        epochs_done: usize,
        best_dev: Option<f64>,
        stale_epochs: usize,
        best_params: ParamStore,
    ) -> Result<Self> {
        let phone_map = PhoneMap::resolve(&config.training.phone_map)?;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.training.workers)
            .build()
            .map_err(|e| Error::config("workers", e.to_string()))?;
        Ok(Trainer { model, config, optimizer, epochs_done, best_dev, stale_epochs, best_params, phone_map, pool })
    }

    pub fn total_epochs(&self) -> usize {
        self.config.training.epochs + self.config.training.fine_tune_epochs
    }

    pub fn phase(&self, epoch: usize) -> Phase {
        if epoch < self.config.training.epochs {
            Phase::Adam
        } else {
            Phase::Sgd
        }
    }

    pub fn is_finished(&self) -> bool {
        let p = self.config.training.patience;
        self.epochs_done >= self.total_epochs() || (p > 0 && self.stale_epochs >= p)
    }

    pub fn phone_map(&self) -> &PhoneMap {
        &self.phone_map
    }

    /// Checkpoint of the current state.
    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            config: self.config.clone(),
            epochs_done: self.epochs_done,
            best_dev: self.best_dev,
            stale_epochs: self.stale_epochs,
            params: self.model.store.clone(),
            optimizer: self.optimizer.clone(),
        }
    }

    /// Checkpoint holding the best parameters seen so far.
    pub fn best_checkpoint(&self) -> Checkpoint {
        Checkpoint { params: self.best_params.clone(), ..self.checkpoint() }
    }

    pub fn best_model(&self) -> Model {
        let mut m = self.model.clone();
        m.store = self.best_params.clone();
        m
    }

    /// Mini-batches of utterance indices for `epoch`: utterances are sorted
    /// by length, cut into batches, and the batch order is shuffled.
    pub fn batches(&self, train: &Dataset, epoch: usize) -> Vec<Vec<usize>> {
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.sort_by_key(|&i| (train.utterances[i].n_frames(), i));
        let mut batches: Vec<Vec<usize>> =
            order.chunks(self.config.training.batch_size).map(<[usize]>::to_vec).collect();
        let mut rng = derived_rng(self.config.training.seed, "batches", epoch as u64, 0);
        batches.shuffle(&mut rng);
        batches
    }

    /// Runs the next epoch. On error the parameters are those after the
    /// last successful update.
    pub fn run_epoch(&mut self, train: &Dataset, dev: Option<&Dataset>) -> Result<EpochRecord> {
        let start = Instant::now();
        let epoch = self.epochs_done;
        let phase = self.phase(epoch);
        let t = &self.config.training;
        let lr = match phase {
            Phase::Adam => t.adam_lr,
            Phase::Sgd => t.sgd_lr,
        };
        let (seed, reduction, l2) = (t.seed, t.loss_reduction, self.config.model.l2);
        let adam = AdamSettings { lr: t.adam_lr, beta1: t.adam_beta1, beta2: t.adam_beta2, eps: t.adam_eps };

        let mut skipped = Vec::new();
        let mut loss_sum = 0.0;
        let mut trained = 0;
        for batch in self.batches(train, epoch) {
            let feasible: Vec<usize> = batch
                .into_iter()
                .filter(|&i| {
                    let u = &train.utterances[i];
                    let ok = min_frames(&u.labels) <= u.n_frames();
                    if !ok {
                        skipped.push(u.id.clone());
                    }
                    ok
                })
                .collect();
            if feasible.is_empty() {
                continue;
            }
            let model = &self.model;
            let results: Vec<Result<(f64, ParamGrads)>> = self.pool.install(|| {
                feasible
                    .par_iter()
                    .map(|&i| {
                        let rng = derived_rng(seed, "dropout", epoch as u64, i as u64);
                        utterance_grads(model, &train.utterances[i], rng)
                    })
                    .collect()
            });
            let mut grads = ParamGrads::zeros_like(&self.model.store);
            for r in results {
                let (loss, g) = r?;
                loss_sum += loss;
                grads.accumulate(&g);
            }
            trained += feasible.len();
            if reduction == LossReduction::Mean {
                grads.scale(1.0 / feasible.len() as f64);
            }
            match phase {
                Phase::Adam => self.optimizer.adam_step(&mut self.model.store, &grads, l2, adam)?,
                Phase::Sgd => self.optimizer.sgd_step(&mut self.model.store, &grads, l2, lr)?,
            }
        }

        let model = &self.model;
        let map = &self.phone_map;
        let dev_report = match dev {
            Some(d) => Some(self.pool.install(|| evaluate(model, d, map))?),
            None => None,
        };
        let train_loss = if trained > 0 { loss_sum / trained as f64 } else { 0.0 };
        let score = match (&dev_report, self.config.training.early_stop) {
            (Some(r), EarlyStopMetric::Per) => r.per(),
            (Some(r), EarlyStopMetric::Loss) => r.loss,
            (None, _) => train_loss,
        };
        let improved = self.best_dev.is_none_or(|b| score < b);
        if improved {
            self.best_dev = Some(score);
            self.best_params = self.model.store.clone();
            self.stale_epochs = 0;
        } else {
            self.stale_epochs += 1;
        }
        self.epochs_done += 1;
        Ok(EpochRecord {
            epoch: self.epochs_done,
            phase,
            lr,
            train_loss,
            l2_penalty: l2_penalty(&self.model.store, l2),
            trained,
            skipped,
            dev: dev_report,
            improved,
            seconds: start.elapsed().as_secs_f64(),
        })
    }

    /// Runs epochs until finished, calling `on_epoch` after each.
    pub fn fit(
        &mut self,
        train: &Dataset,
        dev: Option<&Dataset>,
        mut on_epoch: impl FnMut(&Trainer, &EpochRecord) -> Result<()>,
    ) -> Result<Vec<EpochRecord>> {
        let mut records = Vec::new();
        while !self.is_finished() {
            let r = self.run_epoch(train, dev)?;
            on_epoch(self, &r)?;
            records.push(r);
        }
        Ok(records)
    }
}
