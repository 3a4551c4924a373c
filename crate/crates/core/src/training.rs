//! Pre-training on a labelled multi-class corpus, personal fine-tuning on a
//! support set, and training of the CNN baseline.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::checkpoint::Provenance;
use crate::data::synth::mix;
use crate::data::{all_pairs, sample_pairs, train_val_split, ImageTensor, PairSample, Sample, SupportSet};
use crate::error::{Error, Result};
use crate::models::{batch_of, ArchConfig, CnnBaseline, JuxtapositionNetwork, Trainable};
use crate::nn::loss::bce;
use crate::autograd::Graph;
use crate::nn::{AdamConfig, AdamState, Mode, Pass};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Pretrain,
    Finetune,
}

/// Which weights a run hands back.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Selection {
    /// Lowest validation loss seen (initial weights included); final weights
    /// when there is no validation split.
    #[default]
    BestVal,
    Final,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub stage: Stage,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    /// Pairs drawn per epoch. Pre-training defaults to 10× the training image
    /// count; fine-tuning defaults to every distinct pair in the support set.
    pub pairs_per_epoch: Option<usize>,
    pub seed: u64,
    pub val_fraction: f64,
    /// Stop once every training pair is classified correctly for this many
    /// consecutive epochs.
    pub early_stop: Option<usize>,
    #[serde(default)]
    pub selection: Selection,
}

impl TrainConfig {
    /// Batch 32 / lr 1e-5 / 50 epochs / 9:1 split, and batch 16 / lr 1e-8 / 20 epochs.
    pub fn paper(stage: Stage) -> Self {
        match stage {
            Stage::Pretrain => TrainConfig {
                stage,
                batch_size: 32,
                learning_rate: 1e-5,
                epochs: 50,
                pairs_per_epoch: None,
                seed: 0,
                val_fraction: 0.1,
                early_stop: None,
                selection: Selection::BestVal,
            },
            Stage::Finetune => TrainConfig {
                stage,
                batch_size: 16,
                learning_rate: 1e-8,
                epochs: 20,
                pairs_per_epoch: None,
                seed: 0,
                val_fraction: 0.0,
                early_stop: None,
                selection: Selection::Final,
            },
        }
    }

    /// Laptop budget: learning rate 1e-4, which a freshly initialised small
    /// network needs to move at all, pre-training cut to 10 epochs of 1500
    /// pairs and fine-tuning capped at 120 pairs per epoch.
    pub fn desk(stage: Stage) -> Self {
        let base = TrainConfig { learning_rate: 1e-4, ..Self::paper(stage) };
        match stage {
            Stage::Pretrain => TrainConfig { epochs: 10, pairs_per_epoch: Some(1500), ..base },
            Stage::Finetune => TrainConfig { pairs_per_epoch: Some(120), ..base },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 2 {
            return Err(Error::contract(format!("batch size {} is below 2", self.batch_size)));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::contract(format!("learning rate {} must be positive", self.learning_rate)));
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return Err(Error::contract(format!("validation fraction {} outside [0, 1)", self.val_fraction)));
        }
        if self.early_stop == Some(0) {
            return Err(Error::contract("early stop needs at least one epoch"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    /// 0 is the state before any update.
    pub epoch: usize,
    pub train_loss: Option<f64>,
    pub val_loss: Option<f64>,
    /// Fraction of training pairs (or images) classified correctly in eval mode.
    pub train_accuracy: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub stage: Stage,
    pub seed: u64,
    pub epochs: Vec<EpochLog>,
    pub selected_epoch: usize,
    pub stopped_early: bool,
}

impl TrainReport {
    pub fn epochs_run(&self) -> usize {
        self.epochs.iter().map(|e| e.epoch).max().unwrap_or(0)
    }

    pub fn final_train_loss(&self) -> Option<f64> {
        self.epochs.iter().rev().find_map(|e| e.train_loss)
    }

    pub fn final_val_loss(&self) -> Option<f64> {
        self.epochs.iter().rev().find_map(|e| e.val_loss)
    }

    pub fn provenance(&self, parent: Option<Provenance>) -> Provenance {
        Provenance {
            stage: match self.stage {
                Stage::Pretrain => "pretrain",
                Stage::Finetune => "finetune",
            }
            .into(),
            seed: self.seed,
            epochs_run: self.epochs_run(),
            selected_epoch: Some(self.selected_epoch),
            train_loss: self.final_train_loss(),
            val_loss: self.final_val_loss(),
            parent: parent.map(Box::new),
        }
    }

    /// Exponentially smoothed training loss at the first and last epoch.
    pub fn smoothed_loss_ends(&self, alpha: f64) -> Option<(f64, f64)> {
        let mut losses = self.epochs.iter().filter_map(|e| e.train_loss);
        let first = losses.next()?;
        let last = losses.fold(first, |s, l| alpha * l + (1.0 - alpha) * s);
        Some((first, last))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
        w.write_record(["epoch", "train_loss", "val_loss", "train_accuracy"]).map_err(csv_err)?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for e in &self.epochs {
            w.write_record([e.epoch.to_string(), opt(e.train_loss), opt(e.val_loss), opt(e.train_accuracy)])
                .map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Io(std::io::Error::other(format!("{other:?}"))),
    }
}

fn epoch_seed(seed: u64, stage: u64, epoch: usize) -> u64 {
    mix(mix(seed, stage), epoch as u64)
}

/// One optimisation step of the twin on a batch of pairs; returns the loss.
fn twin_step(
    model: &mut JuxtapositionNetwork,
    adam: &mut AdamState,
    images: &[ImageTensor],
    batch: &[PairSample],
) -> Result<f64> {
    let a: Vec<&ImageTensor> = batch.iter().map(|p| &images[p.a]).collect();
    let b: Vec<&ImageTensor> = batch.iter().map(|p| &images[p.b]).collect();
    let labels: Vec<f64> = batch.iter().map(PairSample::y).collect();
    let mut g = Graph::new();
    let bound = model.store().bind(&mut g, true);
    let (loss, updates) = {
        let mut pass = Pass::new(&mut g, &bound, model.store(), Mode::Train);
        let xa = pass.graph.constant(batch_of(&a)?);
        let xb = pass.graph.constant(batch_of(&b)?);
        let m = model.pair_forward(&mut pass, xa, xb)?;
        let loss = pass.graph.bce_loss(m, &labels)?;
        (loss, pass.updates)
    };
    let value = g.value(loss).item()?;
    if !value.is_finite() {
        return Err(Error::Numeric(format!("training loss became {value}")));
    }
    g.backward(loss)?;
    let grads = model.store().grads(&g, &bound);
    adam.step(model.store_mut(), &grads)?;
    model.store_mut().apply(&updates);
    Ok(value)
}

/// Eval-mode loss and accuracy over pairs, embedding each image once.
fn pair_metrics(model: &JuxtapositionNetwork, images: &[ImageTensor], pairs: &[PairSample]) -> Result<(f64, f64)> {
    let mut used: Vec<usize> = pairs.iter().flat_map(|p| [p.a, p.b]).collect();
    used.sort_unstable();
    used.dedup();
    let refs: Vec<&ImageTensor> = used.iter().map(|&i| &images[i]).collect();
    let embs = model.embed_all(&refs)?;
    let at = |i: usize| &embs[used.binary_search(&i).expect("embedded")];
    let preds: Vec<f64> = pairs.iter().map(|p| model.score_embeddings(at(p.a), at(p.b))).collect();
    let labels: Vec<f64> = pairs.iter().map(PairSample::y).collect();
    let correct = preds.iter().zip(pairs).filter(|(m, p)| (**m > 0.5) == p.same).count();
    let loss = bce(&preds, &labels);
    if !loss.is_finite() {
        return Err(Error::Numeric(format!("evaluation loss became {loss}")));
    }
    Ok((loss, correct as f64 / pairs.len() as f64))
}

/// Splits `items` into consecutive batches, folding a trailing singleton into
/// the previous batch so batch statistics always see at least two samples.
fn batches<T>(items: &[T], size: usize) -> Vec<&[T]> {
    let mut out: Vec<&[T]> = items.chunks(size).collect();
    if out.len() >= 2 && out.last().is_some_and(|b| b.len() == 1) {
        out.pop();
        let start = (out.len() - 1) * size;
        *out.last_mut().expect("at least one batch") = &items[start..];
    }
    out
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Trains a freshly initialised twin (seeded by `cfg.seed`) on same/different
/// pairs drawn from a labelled corpus.
pub fn pretrain(arch: &ArchConfig, corpus: &[Sample], cfg: &TrainConfig) -> Result<(JuxtapositionNetwork, TrainReport)> {
    let model = JuxtapositionNetwork::new(arch, cfg.seed)?;
    pretrain_from(model, corpus, cfg)
}

/// Pre-training starting from the given weights.
pub fn pretrain_from(
    mut model: JuxtapositionNetwork,
    corpus: &[Sample],
    cfg: &TrainConfig,
) -> Result<(JuxtapositionNetwork, TrainReport)> {
    cfg.validate()?;
    let labels: Vec<&str> = corpus.iter().map(|s| s.class.as_str()).collect();
    let classes: std::collections::BTreeSet<&str> = labels.iter().copied().collect();
    if classes.len() < 2 {
        return Err(Error::contract(format!("pre-training needs at least 2 classes, found {}", classes.len())));
    }
    let images: Vec<ImageTensor> = corpus.iter().map(Sample::tensor).collect();
    let (train_idx, val_idx) = train_val_split(&labels, cfg.val_fraction, cfg.seed)?;
    let train_labels: Vec<&str> = train_idx.iter().map(|&i| labels[i]).collect();
    let val_labels: Vec<&str> = val_idx.iter().map(|&i| labels[i]).collect();
    let remap = |pairs: Vec<PairSample>, idx: &[usize]| -> Vec<PairSample> {
        pairs.into_iter().map(|p| PairSample { a: idx[p.a], b: idx[p.b], same: p.same }).collect()
    };

    // validation pairs are fixed for the whole run so losses are comparable
    let val_classes: std::collections::BTreeSet<&str> = val_labels.iter().copied().collect();
    let val_pairs = if val_classes.len() >= 2 && val_idx.len() >= 3 {
        let n = 10 * val_idx.len();
        Some(remap(sample_pairs(&val_labels, n, mix(cfg.seed, 0x7661_6c00))?, &val_idx))
    } else {
        None
    };
    let per_epoch = cfg.pairs_per_epoch.unwrap_or(10 * train_idx.len());

    let mut adam = AdamState::new(AdamConfig::with_lr(cfg.learning_rate), model.store());
    let val_loss = |m: &JuxtapositionNetwork| -> Result<Option<f64>> {
        val_pairs.as_ref().map(|p| pair_metrics(m, &images, p).map(|r| r.0)).transpose()
    };
    let mut log = vec![EpochLog { epoch: 0, train_loss: None, val_loss: val_loss(&model)?, train_accuracy: None }];
    let mut best = (log[0].val_loss, 0usize, model.store().clone());

    for epoch in 1..=cfg.epochs {
        let pairs = remap(sample_pairs(&train_labels, per_epoch, epoch_seed(cfg.seed, 1, epoch))?, &train_idx);
        let mut losses = Vec::new();
        for batch in batches(&pairs, cfg.batch_size) {
            losses.push(twin_step(&mut model, &mut adam, &images, batch)?);
        }
        let v = val_loss(&model)?;
        let train_loss = if losses.is_empty() { None } else { Some(mean(&losses)) };
        log::info!("pretrain epoch {epoch}: train {train_loss:?} val {v:?}");
        if let (Some(vl), Some(bl)) = (v, best.0) {
            if vl < bl {
                best = (v, epoch, model.store().clone());
            }
        }
        log.push(EpochLog { epoch, train_loss, val_loss: v, train_accuracy: None });
    }

    let selected = match (cfg.selection, val_pairs.is_some()) {
        (Selection::BestVal, true) => {
            model.store_mut().copy_from(&best.2)?;
            best.1
        }
        _ => cfg.epochs,
    };
    let report = TrainReport { stage: Stage::Pretrain, seed: cfg.seed, epochs: log, selected_epoch: selected, stopped_early: false };
    Ok((model, report))
}

/// Adapts a copy of `base` to one person's support set. Pairs are labelled
/// same-class when both images are liked or both disliked.
pub fn finetune(
    base: &JuxtapositionNetwork,
    support: &SupportSet,
    cfg: &TrainConfig,
) -> Result<(JuxtapositionNetwork, TrainReport)> {
    cfg.validate()?;
    if support.positives.is_empty() {
        return Err(Error::contract("fine-tuning needs at least one liked example"));
    }
    if support.negatives.is_empty() {
        return Err(Error::contract(
            "fine-tuning needs at least one disliked example: the twin learns by juxtaposing \
             liked against disliked designs, and without them there are no different-style pairs",
        ));
    }
    let mut model = base.clone();
    let images: Vec<ImageTensor> = support.positives.iter().chain(&support.negatives).map(Sample::tensor).collect();
    let labels: Vec<bool> = (0..images.len()).map(|i| i < support.positives.len()).collect();
    let every = all_pairs(&labels);

    let mut adam = AdamState::new(AdamConfig::with_lr(cfg.learning_rate), model.store());
    let (loss0, acc0) = pair_metrics(&model, &images, &every)?;
    let mut log = vec![EpochLog { epoch: 0, train_loss: Some(loss0), val_loss: None, train_accuracy: Some(acc0) }];
    let mut perfect_streak = 0;
    let mut stopped_early = false;

    for epoch in 1..=cfg.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(epoch_seed(cfg.seed, 2, epoch));
        let mut pairs = match cfg.pairs_per_epoch {
            Some(n) if n < every.len() => sample_pairs(&labels, n, epoch_seed(cfg.seed, 3, epoch))?,
            _ => every.clone(),
        };
        pairs.shuffle(&mut rng);
        let mut losses = Vec::new();
        for batch in batches(&pairs, cfg.batch_size) {
            losses.push(twin_step(&mut model, &mut adam, &images, batch)?);
        }
        let (_, acc) = pair_metrics(&model, &images, &every)?;
        log::info!("finetune epoch {epoch}: train {:.5} pair accuracy {acc:.3}", mean(&losses));
        log.push(EpochLog { epoch, train_loss: Some(mean(&losses)), val_loss: None, train_accuracy: Some(acc) });
        perfect_streak = if acc == 1.0 { perfect_streak + 1 } else { 0 };
        if cfg.early_stop.is_some_and(|k| perfect_streak >= k) {
            stopped_early = true;
            break;
        }
    }
    let selected = log.last().map_or(0, |e| e.epoch);
    let report = TrainReport { stage: Stage::Finetune, seed: cfg.seed, epochs: log, selected_epoch: selected, stopped_early };
    Ok((model, report))
}

/// Trains the CNN baseline to classify liked (1) against disliked (0) images.
/// `init` supplies starting weights; otherwise the trunk is freshly initialised
/// from `cfg.seed`.
pub fn train_cnn(
    arch: &ArchConfig,
    support: &SupportSet,
    cfg: &TrainConfig,
    init: Option<CnnBaseline>,
) -> Result<(CnnBaseline, TrainReport)> {
    cfg.validate()?;
    if support.positives.is_empty() || support.negatives.is_empty() {
        return Err(Error::contract("the CNN baseline needs liked and disliked examples"));
    }
    let mut model = match init {
        Some(m) => m,
        None => CnnBaseline::new(arch, cfg.seed)?,
    };
    let images: Vec<ImageTensor> = support.positives.iter().chain(&support.negatives).map(Sample::tensor).collect();
    let labels: Vec<f64> = (0..images.len()).map(|i| if i < support.positives.len() { 1.0 } else { 0.0 }).collect();
    let metrics = |m: &CnnBaseline| -> Result<(f64, f64)> {
        let preds = images.iter().map(|x| m.classify(x)).collect::<Result<Vec<_>>>()?;
        let correct = preds.iter().zip(&labels).filter(|(p, y)| (**p > 0.5) == (**y == 1.0)).count();
        Ok((bce(&preds, &labels), correct as f64 / labels.len() as f64))
    };

    let mut adam = AdamState::new(AdamConfig::with_lr(cfg.learning_rate), model.store());
    let (l0, a0) = metrics(&model)?;
    let mut log = vec![EpochLog { epoch: 0, train_loss: Some(l0), val_loss: None, train_accuracy: Some(a0) }];
    let mut perfect_streak = 0;
    let mut stopped_early = false;
    let mut order: Vec<usize> = (0..images.len()).collect();
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(epoch_seed(cfg.seed, 4, epoch)));
        let mut losses = Vec::new();
        for batch in batches(&order, cfg.batch_size) {
            let xs: Vec<&ImageTensor> = batch.iter().map(|&i| &images[i]).collect();
            let ys: Vec<f64> = batch.iter().map(|&i| labels[i]).collect();
            let mut g = Graph::new();
            let bound = model.store().bind(&mut g, true);
            let (loss, updates) = {
                let mut pass = Pass::new(&mut g, &bound, model.store(), Mode::Train);
                let x = pass.graph.constant(batch_of(&xs)?);
                let p = model.forward(&mut pass, x)?;
                (pass.graph.bce_loss(p, &ys)?, pass.updates)
            };
            let value = g.value(loss).item()?;
            if !value.is_finite() {
                return Err(Error::Numeric(format!("training loss became {value}")));
            }
            g.backward(loss)?;
            let grads = model.store().grads(&g, &bound);
            adam.step(model.store_mut(), &grads)?;
            model.store_mut().apply(&updates);
            losses.push(value);
        }
        let (_, acc) = metrics(&model)?;
        log.push(EpochLog { epoch, train_loss: Some(mean(&losses)), val_loss: None, train_accuracy: Some(acc) });
        perfect_streak = if acc == 1.0 { perfect_streak + 1 } else { 0 };
        if cfg.early_stop.is_some_and(|k| perfect_streak >= k) {
            stopped_early = true;
            break;
        }
    }
    let selected = log.last().map_or(0, |e| e.epoch);
    let report = TrainReport { stage: Stage::Finetune, seed: cfg.seed, epochs: log, selected_epoch: selected, stopped_early };
    Ok((model, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth::{generate_style_dataset, pretrain_catalog};

    fn tiny_corpus(classes: usize, per_class: usize) -> Vec<Sample> {
        generate_style_dataset(&pretrain_catalog()[..classes], per_class, 32, 3).unwrap()
    }

    fn quick(stage: Stage) -> TrainConfig {
        TrainConfig { batch_size: 8, learning_rate: 1e-3, epochs: 2, pairs_per_epoch: Some(16), ..TrainConfig::desk(stage) }
    }

    #[test]
    fn config_contracts() {
        assert!(TrainConfig { batch_size: 1, ..quick(Stage::Pretrain) }.validate().is_err());
        assert!(TrainConfig { learning_rate: 0.0, ..quick(Stage::Pretrain) }.validate().is_err());
        assert!(TrainConfig { val_fraction: 1.0, ..quick(Stage::Pretrain) }.validate().is_err());
        let p = TrainConfig::paper(Stage::Pretrain);
        assert_eq!((p.batch_size, p.learning_rate, p.epochs), (32, 1e-5, 50));
        let f = TrainConfig::paper(Stage::Finetune);
        assert_eq!((f.batch_size, f.learning_rate, f.epochs), (16, 1e-8, 20));
    }

    #[test]
    fn batches_never_end_in_a_singleton() {
        let v: Vec<usize> = (0..9).collect();
        let b = batches(&v, 4);
        assert_eq!(b.iter().map(|b| b.len()).collect::<Vec<_>>(), [4, 5]);
        assert_eq!(batches(&v[..1], 4).len(), 1);
        assert_eq!(batches(&v[..8], 4).iter().map(|b| b.len()).collect::<Vec<_>>(), [4, 4]);
    }

    #[test]
    fn zero_epochs_returns_initialisation() {
        let corpus = tiny_corpus(2, 6);
        let cfg = TrainConfig { epochs: 0, ..quick(Stage::Pretrain) };
        let (m, report) = pretrain(&ArchConfig::tiny(), &corpus, &cfg).unwrap();
        assert_eq!(m.store(), JuxtapositionNetwork::new(&ArchConfig::tiny(), cfg.seed).unwrap().store());
        assert_eq!(report.epochs.len(), 1);
    }

    #[test]
    fn single_class_corpus_rejected() {
        let corpus = tiny_corpus(1, 6);
        assert!(matches!(pretrain(&ArchConfig::tiny(), &corpus, &quick(Stage::Pretrain)), Err(Error::Contract(_))));
    }

    #[test]
    fn pretraining_is_deterministic() {
        let corpus = tiny_corpus(2, 6);
        let cfg = quick(Stage::Pretrain);
        let (a, ra) = pretrain(&ArchConfig::tiny(), &corpus, &cfg).unwrap();
        let (b, rb) = pretrain(&ArchConfig::tiny(), &corpus, &cfg).unwrap();
        assert_eq!(a.store(), b.store());
        assert_eq!(ra, rb);
        assert_eq!(ra.epochs.len(), 3);
        let (c, _) = pretrain(&ArchConfig::tiny(), &corpus, &TrainConfig { seed: 9, ..cfg }).unwrap();
        assert_ne!(a.store(), c.store());
    }

    #[test]
    fn finetune_requires_disliked_examples() {
        let corpus = tiny_corpus(2, 3);
        let base = JuxtapositionNetwork::new(&ArchConfig::tiny(), 0).unwrap();
        let s = SupportSet::new(corpus[..3].to_vec(), Vec::new()).unwrap();
        match finetune(&base, &s, &quick(Stage::Finetune)) {
            Err(Error::Contract(m)) => assert!(m.contains("juxtapos")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn zero_epoch_finetune_keeps_scores() {
        let corpus = tiny_corpus(2, 3);
        let base = JuxtapositionNetwork::new(&ArchConfig::tiny(), 0).unwrap();
        let s = SupportSet::new(corpus[..3].to_vec(), corpus[3..].to_vec()).unwrap();
        let (m, _) = finetune(&base, &s, &TrainConfig { epochs: 0, ..quick(Stage::Finetune) }).unwrap();
        let (x, y) = (corpus[0].tensor(), corpus[4].tensor());
        assert_eq!(m.match_score(&x, &y).unwrap(), base.match_score(&x, &y).unwrap());
    }

    #[test]
    fn early_stop_ends_the_run() {
        let corpus = tiny_corpus(2, 3);
        let base = JuxtapositionNetwork::new(&ArchConfig::tiny(), 0).unwrap();
        let s = SupportSet::new(corpus[..3].to_vec(), corpus[3..].to_vec()).unwrap();
        let cfg = TrainConfig { epochs: 60, learning_rate: 3e-3, early_stop: Some(2), ..quick(Stage::Finetune) };
        let (_, report) = finetune(&base, &s, &cfg).unwrap();
        let accs: Vec<f64> = report.epochs.iter().filter_map(|e| e.train_accuracy).collect();
        if report.stopped_early {
            assert!(accs[accs.len() - 2..].iter().all(|&a| a == 1.0));
            assert!(report.epochs_run() < 60);
        } else {
            assert_eq!(report.epochs_run(), 60);
        }
    }

    #[test]
    fn csv_log_has_one_row_per_epoch() {
        let corpus = tiny_corpus(2, 6);
        let (_, report) = pretrain(&ArchConfig::tiny(), &corpus, &quick(Stage::Pretrain)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log.csv");
        report.write_csv(&path).unwrap();
        let text = std::fs::read_to_string(path).unwrap();
        assert_eq!(text.lines().count(), 1 + 3);
        assert!(text.starts_with("epoch,train_loss,val_loss,train_accuracy"));
    }
}
