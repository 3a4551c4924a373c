//! The evaluation protocol: confusion cells and rates on 50 liked + 50
//! disliked held-out designs, the training-size sweep and the
//! liked:disliked ratio sweep.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{HistogramModel, ThresholdPairs};
use crate::comparison::{Support, DEFAULT_THRESHOLD};
use crate::data::synth::mix;
use crate::data::{split_evaluation_sets, EvalSplit, Sample, SupportSet};
use crate::error::{Error, Result};
use crate::models::{ArchConfig, CnnBaseline, Embedding, JuxtapositionNetwork};
use crate::training::{csv_err, finetune, train_cnn, TrainConfig, TrainReport};

/// Something that gives one test design an aggregate like-score.
pub trait Scorer: Sync {
    fn name(&self) -> &str;

    fn threshold(&self) -> f64;

    fn score(&self, sample: &Sample) -> Result<f64>;
}

/// Median twin match score against the liked references.
pub struct TwinScorer<'a> {
    model: &'a JuxtapositionNetwork,
    support: Support<Embedding>,
    threshold: f64,
}

impl<'a> TwinScorer<'a> {
    pub fn new(model: &'a JuxtapositionNetwork, positives: &[Sample], threshold: f64) -> Result<Self> {
        let tensors: Vec<_> = positives.iter().map(Sample::tensor).collect();
        let refs: Vec<_> = tensors.iter().collect();
        Ok(TwinScorer { model, support: Support::encode(model, &refs)?, threshold })
    }
}

impl Scorer for TwinScorer<'_> {
    fn name(&self) -> &str {
        "twin"
    }

    fn threshold(&self) -> f64 {
        self.threshold
    }

    fn score(&self, sample: &Sample) -> Result<f64> {
        let key = self.model.embed(&sample.tensor())?;
        Ok(self.support.verdict(self.model, &key, self.threshold)?.aggregate)
    }
}

pub struct HistogramScorer(pub HistogramModel);

impl Scorer for HistogramScorer {
    fn name(&self) -> &str {
        "histogram"
    }

    fn threshold(&self) -> f64 {
        self.0.threshold
    }

    fn score(&self, sample: &Sample) -> Result<f64> {
        Ok(self.0.verdict(&sample.raw)?.aggregate)
    }
}

pub struct CnnScorer<'a>(pub &'a CnnBaseline);

impl Scorer for CnnScorer<'_> {
    fn name(&self) -> &str {
        "cnn"
    }

    fn threshold(&self) -> f64 {
        DEFAULT_THRESHOLD
    }

    fn score(&self, sample: &Sample) -> Result<f64> {
        self.0.classify(&sample.tensor())
    }
}

/// `2·tp / (2·tp + fp + fn)`, 0 when nothing was predicted or present.
pub fn f1_score(tp: usize, fp: usize, fn_: usize) -> f64 {
    let denom = 2 * tp + fp + fn_;
    if denom == 0 {
        0.0
    } else {
        2.0 * tp as f64 / denom as f64
    }
}

/// F1 on equally sized liked and disliked test sets, from the two rates.
pub fn f1_from_rates(tp_rate: f64, tn_rate: f64) -> f64 {
    let denom = 2.0 * tp_rate + (1.0 - tn_rate) + (1.0 - tp_rate);
    if denom == 0.0 {
        0.0
    } else {
        2.0 * tp_rate / denom
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Experiment tag, e.g. `size-5` or `ratio-10:5`.
    pub label: String,
    pub scorer: String,
    pub seed: u64,
    pub train_pos: usize,
    pub train_neg: usize,
    pub threshold: f64,
    pub tp: usize,
    pub tn: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub accuracy: f64,
    pub tp_rate: f64,
    pub tn_rate: f64,
    pub f1: f64,
}

impl EvalReport {
    pub fn from_cells(tp: usize, tn: usize, fp: usize, fn_: usize) -> Self {
        let pos = tp + fn_;
        let neg = tn + fp;
        let rate = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
        EvalReport {
            label: String::new(),
            scorer: String::new(),
            seed: 0,
            train_pos: 0,
            train_neg: 0,
            threshold: DEFAULT_THRESHOLD,
            tp,
            tn,
            fp,
            fn_,
            accuracy: rate(tp + tn, pos + neg),
            tp_rate: rate(tp, pos),
            tn_rate: rate(tn, neg),
            f1: f1_score(tp, fp, fn_),
        }
    }

    pub fn total(&self) -> usize {
        self.tp + self.tn + self.fp + self.fn_
    }

    pub fn tagged(mut self, label: &str, seed: u64, train_pos: usize, train_neg: usize) -> Self {
        self.label = label.to_string();
        self.seed = seed;
        self.train_pos = train_pos;
        self.train_neg = train_neg;
        self
    }
}

/// Scores every test design. A positive counts as a true positive when its
/// score is strictly above the threshold; a negative is a true negative
/// otherwise. Any test design that was also used for training is refused.
pub fn evaluate(
    scorer: &dyn Scorer,
    test_pos: &[Sample],
    test_neg: &[Sample],
    training_ids: &BTreeSet<String>,
) -> Result<EvalReport> {
    if let Some(leak) = test_pos.iter().chain(test_neg).find(|s| training_ids.contains(&s.id)) {
        return Err(Error::Protocol(format!("test design {} is also in the training data", leak.id)));
    }
    let t = scorer.threshold();
    let like = |set: &[Sample]| -> Result<Vec<bool>> {
        set.par_iter().map(|s| Ok(scorer.score(s)? > t)).collect()
    };
    let pos = like(test_pos)?;
    let neg = like(test_neg)?;
    let tp = pos.iter().filter(|&&l| l).count();
    let fp = neg.iter().filter(|&&l| l).count();
    let mut report = EvalReport::from_cells(tp, neg.len() - fp, fp, pos.len() - tp);
    report.scorer = scorer.name().to_string();
    report.threshold = t;
    Ok(report)
}

/// One synthetic or real participant: 70 liked and 70 disliked designs.
#[derive(Clone, Debug)]
pub struct Participant {
    pub liked: Vec<Sample>,
    pub disliked: Vec<Sample>,
}

/// A seeded 50/20 split of both sets.
#[derive(Clone, Debug)]
pub struct ParticipantSplit {
    pub seed: u64,
    pub liked: EvalSplit<Sample>,
    pub disliked: EvalSplit<Sample>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SplitManifest {
    pub seed: u64,
    pub test_liked: Vec<String>,
    pub test_disliked: Vec<String>,
    /// Training order; every prefix is a subsample.
    pub train_liked: Vec<String>,
    pub train_disliked: Vec<String>,
}

impl ParticipantSplit {
    pub fn new(p: &Participant, seed: u64) -> Result<Self> {
        Ok(ParticipantSplit {
            seed,
            liked: split_evaluation_sets(&p.liked, mix(seed, 1))?,
            disliked: split_evaluation_sets(&p.disliked, mix(seed, 2))?,
        })
    }

    /// The first `n_pos` liked and `n_neg` disliked training designs.
    pub fn support(&self, n_pos: usize, n_neg: usize) -> Result<SupportSet> {
        SupportSet::new(self.liked.subsample(n_pos)?.to_vec(), self.disliked.subsample(n_neg)?.to_vec())
    }

    /// Ids of every training design, whether or not a given run uses it.
    pub fn training_ids(&self) -> BTreeSet<String> {
        self.liked.train.iter().chain(&self.disliked.train).map(|s| s.id.clone()).collect()
    }

    pub fn manifest(&self) -> SplitManifest {
        let ids = |v: &[Sample]| v.iter().map(|s| s.id.clone()).collect();
        SplitManifest {
            seed: self.seed,
            test_liked: ids(&self.liked.test),
            test_disliked: ids(&self.disliked.test),
            train_liked: ids(&self.liked.train),
            train_disliked: ids(&self.disliked.train),
        }
    }

    pub fn evaluate(&self, scorer: &dyn Scorer) -> Result<EvalReport> {
        evaluate(scorer, &self.liked.test, &self.disliked.test, &self.training_ids())
    }
}

/// Fine-tuning settings for one experiment; the seed is derived per run.
#[derive(Clone, Debug)]
pub struct Protocol {
    pub finetune: TrainConfig,
    pub threshold: f64,
}

impl Protocol {
    fn finetune_cfg(&self, split_seed: u64, n_pos: usize, n_neg: usize) -> TrainConfig {
        let tag = (n_pos as u64) << 32 | n_neg as u64;
        TrainConfig { seed: mix(mix(self.finetune.seed, split_seed), tag), ..self.finetune.clone() }
    }

    /// Fine-tunes on `n_pos`/`n_neg` support designs and evaluates the twin.
    pub fn twin(
        &self,
        pretrained: &JuxtapositionNetwork,
        split: &ParticipantSplit,
        n_pos: usize,
        n_neg: usize,
        label: &str,
    ) -> Result<(EvalReport, JuxtapositionNetwork, TrainReport)> {
        let support = split.support(n_pos, n_neg)?;
        let (model, train) = finetune(pretrained, &support, &self.finetune_cfg(split.seed, n_pos, n_neg))?;
        let scorer = TwinScorer::new(&model, &support.positives, self.threshold)?;
        let report = split.evaluate(&scorer)?.tagged(label, split.seed, n_pos, n_neg);
        Ok((report, model, train))
    }

    /// The pre-trained twin with a single liked reference, no fine-tuning.
    pub fn one_shot(&self, pretrained: &JuxtapositionNetwork, split: &ParticipantSplit, label: &str) -> Result<EvalReport> {
        let scorer = TwinScorer::new(pretrained, split.liked.subsample(1)?, self.threshold)?;
        Ok(split.evaluate(&scorer)?.tagged(label, split.seed, 1, 0))
    }

    pub fn histogram(&self, split: &ParticipantSplit, n_pos: usize, n_neg: usize, pairs: ThresholdPairs, label: &str) -> Result<EvalReport> {
        let s = split.support(n_pos, n_neg)?;
        let pos: Vec<_> = s.positives.iter().map(|x| &x.raw).collect();
        let neg: Vec<_> = s.negatives.iter().map(|x| &x.raw).collect();
        let scorer = HistogramScorer(HistogramModel::fit(&pos, &neg, pairs)?);
        Ok(split.evaluate(&scorer)?.tagged(label, split.seed, n_pos, n_neg))
    }

    /// CNN classifier trained on the support set, optionally starting from
    /// the pre-trained embedding trunk.
    pub fn cnn(
        &self,
        arch: &ArchConfig,
        split: &ParticipantSplit,
        n_pos: usize,
        n_neg: usize,
        init: Option<CnnBaseline>,
        label: &str,
    ) -> Result<EvalReport> {
        let support = split.support(n_pos, n_neg)?;
        let (model, _) = train_cnn(arch, &support, &self.finetune_cfg(split.seed, n_pos, n_neg), init)?;
        Ok(split.evaluate(&CnnScorer(&model))?.tagged(label, split.seed, n_pos, n_neg))
    }

    /// Accuracy per training size; size 1 uses the pre-trained model with one
    /// liked reference, other sizes fine-tune on `k` liked and `k` disliked.
    pub fn size_sweep(&self, pretrained: &JuxtapositionNetwork, split: &ParticipantSplit, sizes: &[usize]) -> Result<Vec<EvalReport>> {
        sizes
            .iter()
            .map(|&k| {
                let label = format!("size-{k}");
                if k == 1 {
                    self.one_shot(pretrained, split, &label)
                } else {
                    Ok(self.twin(pretrained, split, k, k, &label)?.0)
                }
            })
            .collect()
    }

    /// One fine-tuned twin per `(liked, disliked)` support composition.
    pub fn ratio_sweep(
        &self,
        pretrained: &JuxtapositionNetwork,
        split: &ParticipantSplit,
        ratios: &[(usize, usize)],
    ) -> Result<Vec<EvalReport>> {
        ratios
            .iter()
            .map(|&(p, n)| Ok(self.twin(pretrained, split, p, n, &format!("ratio-{p}:{n}"))?.0))
            .collect()
    }
}

pub const RATIOS: [(usize, usize); 2] = [(10, 5), (5, 10)];

pub fn write_reports_csv(path: &Path, reports: &[EvalReport]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    for r in reports {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Mean and range of one (label, scorer) group across seeds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub label: String,
    pub scorer: String,
    pub runs: usize,
    pub accuracy_mean: f64,
    pub accuracy_min: f64,
    pub accuracy_max: f64,
    pub tp_rate_mean: f64,
    pub tn_rate_mean: f64,
    pub f1_mean: f64,
}

pub fn summarize(reports: &[EvalReport]) -> Vec<SummaryRow> {
    let mut keys: Vec<(&str, &str)> = Vec::new();
    for r in reports {
        let k = (r.label.as_str(), r.scorer.as_str());
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    keys.into_iter()
        .map(|(label, scorer)| {
            let group: Vec<&EvalReport> = reports.iter().filter(|r| r.label == label && r.scorer == scorer).collect();
            let n = group.len() as f64;
            let mean = |f: fn(&EvalReport) -> f64| group.iter().map(|r| f(r)).sum::<f64>() / n;
            SummaryRow {
                label: label.to_string(),
                scorer: scorer.to_string(),
                runs: group.len(),
                accuracy_mean: mean(|r| r.accuracy),
                accuracy_min: group.iter().map(|r| r.accuracy).fold(f64::INFINITY, f64::min),
                accuracy_max: group.iter().map(|r| r.accuracy).fold(f64::NEG_INFINITY, f64::max),
                tp_rate_mean: mean(|r| r.tp_rate),
                tn_rate_mean: mean(|r| r.tn_rate),
                f1_mean: mean(|r| r.f1),
            }
        })
        .collect()
}

pub fn markdown_summary(reports: &[EvalReport]) -> String {
    let mut out = String::from(
        "| experiment | scorer | runs | accuracy (mean) | accuracy (range) | TP rate | TN rate | F1 |\n\
         |---|---|---|---|---|---|---|---|\n",
    );
    for r in summarize(reports) {
        let _ = writeln!(
            out,
            "| {} | {} | {} | {:.2}% | {:.2}–{:.2}% | {:.2}% | {:.2}% | {:.3} |",
            r.label,
            r.scorer,
            r.runs,
            100.0 * r.accuracy_mean,
            100.0 * r.accuracy_min,
            100.0 * r.accuracy_max,
            100.0 * r.tp_rate_mean,
            100.0 * r.tn_rate_mean,
            r.f1_mean
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::{Rgb, RgbImage};

    struct Fixed<F: Fn(&Sample) -> f64 + Sync>(F);

    impl<F: Fn(&Sample) -> f64 + Sync> Scorer for Fixed<F> {
        fn name(&self) -> &str {
            "fixed"
        }

        fn threshold(&self) -> f64 {
            0.5
        }

        fn score(&self, s: &Sample) -> Result<f64> {
            Ok((self.0)(s))
        }
    }

    fn samples(prefix: &str, n: usize) -> Vec<Sample> {
        (0..n)
            .map(|i| Sample {
                id: format!("{prefix}/{i:03}"),
                class: prefix.into(),
                raw: RgbImage::from_pixel(2, 2, Rgb([i as u8, 0, 0])),
            })
            .collect()
    }

    #[test]
    fn oracle_and_constant_scorers() {
        let (pos, neg) = (samples("pos", 50), samples("neg", 50));
        let none = BTreeSet::new();
        let oracle = Fixed(|s: &Sample| if s.class == "pos" { 1.0 } else { 0.0 });
        let r = evaluate(&oracle, &pos, &neg, &none).unwrap();
        assert_eq!((r.tp, r.tn, r.accuracy), (50, 50, 1.0));
        let r = evaluate(&Fixed(|_: &Sample| 0.7), &pos, &neg, &none).unwrap();
        assert_eq!((r.tp, r.tn, r.fp, r.fn_), (50, 0, 50, 0));
        assert_eq!(r.accuracy, 0.5);
        // exactly at threshold: wrong for positives, right for negatives
        let r = evaluate(&Fixed(|_: &Sample| 0.5), &pos, &neg, &none).unwrap();
        assert_eq!((r.tp, r.tn), (0, 50));
    }

    #[test]
    fn leakage_is_a_protocol_error() {
        let (pos, neg) = (samples("pos", 3), samples("neg", 3));
        let train: BTreeSet<String> = ["neg/001".to_string()].into();
        assert!(matches!(evaluate(&Fixed(|_: &Sample| 0.1), &pos, &neg, &train), Err(Error::Protocol(_))));
    }

    #[test]
    fn f1_examples() {
        assert!((f1_from_rates(0.824, 0.684) - 0.77).abs() < 0.005);
        assert!((f1_from_rates(0.652, 0.828) - 0.71).abs() < 0.005);
        assert_eq!(f1_score(0, 0, 0), 0.0);
        let r = EvalReport::from_cells(41, 34, 16, 9);
        assert!((r.f1 - f1_from_rates(r.tp_rate, r.tn_rate)).abs() < 1e-12);
    }

    #[test]
    fn cells_match_recount() {
        use rand::{Rng, SeedableRng};
        let (pos, neg) = (samples("pos", 50), samples("neg", 50));
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let table: std::collections::HashMap<String, f64> =
            pos.iter().chain(&neg).map(|s| (s.id.clone(), rng.gen::<f64>())).collect();
        let scorer = Fixed(|s: &Sample| table[&s.id]);
        let r = evaluate(&scorer, &pos, &neg, &BTreeSet::new()).unwrap();
        let tp = pos.iter().filter(|s| table[&s.id] > 0.5).count();
        let tn = neg.iter().filter(|s| table[&s.id] <= 0.5).count();
        assert_eq!((r.tp, r.tn, r.fp, r.fn_), (tp, tn, 50 - tn, 50 - tp));
        assert_eq!(r.total(), 100);
        assert!((r.accuracy - (tp + tn) as f64 / 100.0).abs() < 1e-12);
        // a uniform random scorer lands within 5 binomial sd of chance
        assert!((r.accuracy - 0.5).abs() <= 5.0 * 0.05);
        // pure function of its inputs
        assert_eq!(r, evaluate(&scorer, &pos, &neg, &BTreeSet::new()).unwrap());
    }

    #[test]
    fn participant_split_is_disjoint_and_nested() {
        let p = Participant { liked: samples("pos", 70), disliked: samples("neg", 70) };
        let split = ParticipantSplit::new(&p, 3).unwrap();
        let train = split.training_ids();
        assert_eq!(train.len(), 40);
        assert!(split.liked.test.iter().chain(&split.disliked.test).all(|s| !train.contains(&s.id)));
        let s5 = split.support(5, 5).unwrap().ids();
        let s10 = split.support(10, 5).unwrap().ids();
        assert!(s5.is_subset(&s10));
    }

    #[test]
    fn summary_groups_by_label_and_scorer() {
        let mut a = EvalReport::from_cells(40, 30, 20, 10).tagged("size-5", 0, 5, 5);
        a.scorer = "twin".into();
        let mut b = EvalReport::from_cells(30, 40, 10, 20).tagged("size-5", 1, 5, 5);
        b.scorer = "twin".into();
        let rows = summarize(&[a.clone(), b.clone()]);
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].runs, 2);
        assert!((rows[0].accuracy_mean - 0.7).abs() < 1e-12);
        let md = markdown_summary(&[a.clone(), b]);
        assert!(md.contains("| size-5 | twin | 2 | 70.00% |"));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        write_reports_csv(&path, &[a]).unwrap();
        let text = std::fs::read_to_string(path).unwrap();
        assert!(text.lines().next().unwrap().contains(",fn,"));
    }
}
