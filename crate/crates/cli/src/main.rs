//! `stylekit` command-line tool: data generation, training, evaluation
//! sweeps, baselines and retrieval, each writing its artifacts and a
//! manifest of the resolved configuration into an output directory.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use stylekit::baselines::ThresholdPairs;
use stylekit::checkpoint::{load_checkpoint, save_checkpoint, Provenance};
use stylekit::comparison::{gallery_entries, rank_database, write_gallery, Support, DEFAULT_THRESHOLD};
use stylekit::data::synth::{foreign_styles, participant_styles, pretrain_specs, DESK_PARTICIPANT_JITTER};
use stylekit::data::{generate_style_dataset, load_class_dir, load_dataset, write_dataset, Sample};
use stylekit::evaluation::{
    markdown_summary, write_reports_csv, EvalReport, Participant, ParticipantSplit, Protocol, SplitManifest, TwinScorer,
};
use stylekit::models::{ArchConfig, JuxtapositionNetwork};
use stylekit::training::{finetune, pretrain, Selection, Stage, TrainConfig};
use stylekit::{Error, Result};

#[derive(Parser, Debug)]
#[command(name = "stylekit", version, about = "Few-shot visual style matching with a twin network")]
struct Cli {
    /// Directory that receives every artifact of the run.
    #[arg(long, global = true, env = "STYLEKIT_OUT", default_value = "stylekit-out")]
    out: PathBuf,
    #[arg(long, global = true, value_enum, default_value_t = Preset::Desk)]
    preset: Preset,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads; defaults to the number of cores. Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Preset {
    /// 224×224 inputs, 4096-d embeddings, published hyperparameters.
    Paper,
    /// 64×64 inputs, 256-d embeddings, learning rate 1e-4, shortened pre-training.
    Desk,
}

impl Preset {
    fn arch(self) -> ArchConfig {
        match self {
            Preset::Paper => ArchConfig::paper(),
            Preset::Desk => ArchConfig::desk(),
        }
    }

    fn train(self, stage: Stage) -> TrainConfig {
        match self {
            Preset::Paper => TrainConfig::paper(stage),
            Preset::Desk => TrainConfig::desk(stage),
        }
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Render a synthetic style corpus as `<out>/<class>/*.png`.
    GenData(GenData),
    /// Pre-train the twin network on a labelled corpus.
    Pretrain(PretrainArgs),
    /// Fine-tune a pre-trained model on one participant's support set.
    Finetune(FinetuneArgs),
    /// Score images against a folder of liked references.
    Score(ScoreArgs),
    /// Evaluate a fine-tuned model on the held-out designs of its split.
    Evaluate(EvaluateArgs),
    /// Accuracy against the number of training examples.
    SweepSize(SweepSizeArgs),
    /// Accuracy against the liked:disliked composition of the support set.
    SweepRatio(SweepRatioArgs),
    /// Run the colour-histogram or plain-CNN baseline.
    Baseline(BaselineArgs),
    /// Retrieve the best-matching designs from a folder.
    Query(QueryArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum DataKind {
    /// Multi-class pre-training corpus.
    Pretrain,
    /// `liked/` and `disliked/` sets for one synthetic participant.
    Participant,
    /// Styles unrelated to the participant, for retrieval databases.
    Foreign,
}

#[derive(Args, Debug)]
struct GenData {
    #[arg(long, value_enum, default_value_t = DataKind::Pretrain)]
    kind: DataKind,
    /// Number of style families (pre-training corpus only).
    #[arg(long, default_value_t = 6)]
    specs: usize,
    /// Images per family; defaults to 50 (pretrain), 70 (participant), 20 (foreign).
    #[arg(long)]
    per_class: Option<usize>,
    /// Per-image variation of participant styles in [0, 1].
    #[arg(long, default_value_t = DESK_PARTICIPANT_JITTER)]
    jitter: f64,
    /// Image side in pixels; defaults to the preset input size.
    #[arg(long)]
    size: Option<u32>,
}

#[derive(Args, Debug, Clone, Default)]
struct Hyper {
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    pairs_per_epoch: Option<usize>,
    #[arg(long)]
    val_fraction: Option<f64>,
    /// Stop after this many consecutive epochs with every training pair correct.
    #[arg(long)]
    early_stop: Option<usize>,
    /// Keep the final weights instead of the best-validation ones.
    #[arg(long)]
    keep_final: bool,
}

impl Hyper {
    fn resolve(&self, mut cfg: TrainConfig, seed: u64) -> Result<TrainConfig> {
        cfg.seed = seed;
        if let Some(v) = self.epochs {
            cfg.epochs = v;
        }
        if let Some(v) = self.lr {
            cfg.learning_rate = v;
        }
        if let Some(v) = self.batch_size {
            cfg.batch_size = v;
        }
        if self.pairs_per_epoch.is_some() {
            cfg.pairs_per_epoch = self.pairs_per_epoch;
        }
        if let Some(v) = self.val_fraction {
            cfg.val_fraction = v;
        }
        if self.early_stop.is_some() {
            cfg.early_stop = self.early_stop;
        }
        if self.keep_final {
            cfg.selection = Selection::Final;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args, Debug)]
struct PretrainArgs {
    /// Corpus laid out as `<data>/<class>/*.png`.
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    hyper: Hyper,
}

#[derive(Args, Debug)]
struct FinetuneArgs {
    #[arg(long)]
    base: PathBuf,
    /// Directory with `liked/` and `disliked/`, 70 images each.
    #[arg(long)]
    participant: PathBuf,
    #[arg(long, default_value_t = 5)]
    pos: usize,
    #[arg(long, default_value_t = 5)]
    neg: usize,
    #[command(flatten)]
    hyper: Hyper,
}

#[derive(Args, Debug)]
struct ScoreArgs {
    #[arg(long)]
    model: PathBuf,
    /// Folder of liked reference images.
    #[arg(long)]
    liked: PathBuf,
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    threshold: f64,
    /// Images to score.
    #[arg(required = true)]
    images: Vec<PathBuf>,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    participant: PathBuf,
    /// `split.json` written by `finetune`.
    #[arg(long)]
    split: PathBuf,
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    threshold: f64,
}

#[derive(Args, Debug)]
struct SweepSizeArgs {
    #[arg(long)]
    base: PathBuf,
    #[arg(long)]
    participant: PathBuf,
    #[arg(long, value_delimiter = ',', default_values_t = [1, 5, 10, 20])]
    sizes: Vec<usize>,
    /// Number of split seeds, counting up from `--seed`.
    #[arg(long, default_value_t = 5)]
    seeds: u64,
    #[command(flatten)]
    hyper: Hyper,
}

#[derive(Args, Debug)]
struct SweepRatioArgs {
    #[arg(long)]
    base: PathBuf,
    #[arg(long)]
    participant: PathBuf,
    /// Comma-separated `liked:disliked` compositions.
    #[arg(long, value_delimiter = ',', default_values_t = ["10:5".to_string(), "5:10".to_string()])]
    ratios: Vec<String>,
    #[arg(long, default_value_t = 5)]
    seeds: u64,
    #[command(flatten)]
    hyper: Hyper,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum BaselineKind {
    Histogram,
    Cnn,
}

#[derive(Args, Debug)]
struct BaselineArgs {
    #[arg(long, value_enum)]
    kind: BaselineKind,
    #[arg(long)]
    participant: PathBuf,
    #[arg(long, default_value_t = 5)]
    pos: usize,
    #[arg(long, default_value_t = 5)]
    neg: usize,
    #[arg(long, default_value_t = 5)]
    seeds: u64,
    /// Calibrate the histogram threshold on liked images only.
    #[arg(long)]
    positives_only: bool,
    #[command(flatten)]
    hyper: Hyper,
}

#[derive(Args, Debug)]
struct QueryArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    liked: PathBuf,
    /// Folder (searched recursively one level deep) of candidate designs.
    #[arg(long)]
    db: PathBuf,
    #[arg(long, default_value_t = 10)]
    k: usize,
}

fn require_dir(p: &Path) -> Result<()> {
    if p.is_dir() {
        Ok(())
    } else {
        Err(Error::Input { path: p.to_path_buf(), message: "not a directory".into() })
    }
}

fn require_file(p: &Path) -> Result<()> {
    if p.is_file() {
        Ok(())
    } else {
        Err(Error::Input { path: p.to_path_buf(), message: "no such file".into() })
    }
}

/// Canonical form of a path that may not exist yet: the deepest existing
/// ancestor is resolved and the remainder appended.
fn absolute(p: &Path) -> PathBuf {
    let p = std::path::absolute(p).unwrap_or_else(|_| p.to_path_buf());
    let mut tail = Vec::new();
    let mut cur = p.as_path();
    loop {
        if let Ok(c) = cur.canonicalize() {
            return tail.iter().rev().fold(c, |acc: PathBuf, t| acc.join(t));
        }
        match (cur.parent(), cur.file_name()) {
            (Some(parent), Some(name)) => {
                tail.push(name.to_os_string());
                cur = parent;
            }
            _ => return p,
        }
    }
}

/// Refuses an output directory that is, or lies inside, an input directory.
fn keep_inputs_untouched(out: &Path, inputs: &[&Path]) -> Result<()> {
    let out = absolute(out);
    for input in inputs {
        if let Ok(inp) = input.canonicalize() {
            if out.starts_with(&inp) {
                return Err(Error::Input {
                    path: out.clone(),
                    message: format!("output directory lies inside input {}", inp.display()),
                });
            }
        }
    }
    Ok(())
}

/// Loads one class folder with ids relative to `root`, so ids survive moving the data.
fn load_class(root: &Path, class: &str, size: u32) -> Result<Vec<Sample>> {
    let dir = root.join(class);
    require_dir(&dir)?;
    let mut samples = load_class_dir(&dir, class, size)?;
    for s in &mut samples {
        let name = Path::new(&s.id).file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        s.id = format!("{class}/{name}");
    }
    Ok(samples)
}

fn load_participant(root: &Path, size: u32) -> Result<Participant> {
    Ok(Participant { liked: load_class(root, "liked", size)?, disliked: load_class(root, "disliked", size)? })
}

fn load_folder(dir: &Path, size: u32) -> Result<Vec<Sample>> {
    require_dir(dir)?;
    let mut out = load_class_dir(dir, "", size)?;
    if out.is_empty() {
        if let Ok(nested) = load_dataset(dir, size) {
            out = nested;
        }
    }
    if out.is_empty() {
        return Err(Error::Input { path: dir.to_path_buf(), message: "no PNG images found".into() });
    }
    Ok(out)
}

struct Run<'a> {
    cli: &'a Cli,
    argv: Vec<String>,
}

impl Run<'_> {
    /// Creates the output directory; called once inputs have been checked.
    fn ready(&self) -> Result<()> {
        fs::create_dir_all(&self.cli.out)?;
        Ok(())
    }

    fn out(&self, name: &str) -> PathBuf {
        self.cli.out.join(name)
    }

    fn manifest(&self, command: &str, config: Value, outputs: &[&str]) -> Result<()> {
        let m = json!({
            "tool": "stylekit",
            "version": env!("CARGO_PKG_VERSION"),
            "argv": self.argv,
            "command": command,
            "preset": self.cli.preset,
            "seed": self.cli.seed,
            "config": config,
            "outputs": outputs,
        });
        fs::write(self.out("manifest.json"), serde_json::to_string_pretty(&m)?)?;
        Ok(())
    }

    fn arch(&self) -> ArchConfig {
        self.cli.preset.arch()
    }

    fn size(&self) -> u32 {
        self.arch().input_size as u32
    }

    fn load_model(&self, path: &Path) -> Result<(JuxtapositionNetwork, Provenance)> {
        load_checkpoint(path, Some(&self.arch()))
    }
}

fn write_reports(run: &Run<'_>, reports: &[EvalReport]) -> Result<String> {
    write_reports_csv(&run.out("reports.csv"), reports)?;
    let md = markdown_summary(reports);
    fs::write(run.out("summary.md"), &md)?;
    Ok(md)
}

fn parse_ratio(s: &str) -> Result<(usize, usize)> {
    let bad = || Error::Contract(format!("ratio {s:?} is not of the form liked:disliked"));
    let (p, n) = s.split_once(':').ok_or_else(bad)?;
    Ok((p.trim().parse().map_err(|_| bad())?, n.trim().parse().map_err(|_| bad())?))
}

fn gen_data(run: &Run<'_>, a: &GenData) -> Result<()> {
    run.ready()?;
    let size = a.size.unwrap_or(run.size());
    let (specs, per_class) = match a.kind {
        DataKind::Pretrain => (pretrain_specs(a.specs), a.per_class.unwrap_or(50)),
        DataKind::Participant => {
            let (l, d) = participant_styles(a.jitter);
            (vec![l, d], a.per_class.unwrap_or(70))
        }
        DataKind::Foreign => (foreign_styles(), a.per_class.unwrap_or(20)),
    };
    let samples = generate_style_dataset(&specs, per_class, size, run.cli.seed)?;
    let paths = write_dataset(&run.cli.out, &samples)?;
    log::info!("wrote {} images for {} styles", paths.len(), specs.len());
    run.manifest(
        "gen-data",
        json!({ "kind": a.kind, "per_class": per_class, "size": size, "specs": specs, "images": paths.len() }),
        &["<class>/*.png"],
    )
}

fn pretrain_cmd(run: &Run<'_>, a: &PretrainArgs) -> Result<()> {
    require_dir(&a.data)?;
    keep_inputs_untouched(&run.cli.out, &[&a.data])?;
    run.ready()?;
    let cfg = a.hyper.resolve(run.cli.preset.train(Stage::Pretrain), run.cli.seed)?;
    let corpus = load_dataset(&a.data, run.size())?;
    log::info!("pre-training on {} images", corpus.len());
    let (model, report) = pretrain(&run.arch(), &corpus, &cfg)?;
    save_checkpoint(&model, &report.provenance(None), &run.out("model.ckpt"))?;
    report.write_csv(&run.out("train_log.csv"))?;
    run.manifest(
        "pretrain",
        json!({ "arch": run.arch(), "train": cfg, "data": a.data, "images": corpus.len(), "selected_epoch": report.selected_epoch }),
        &["model.ckpt", "train_log.csv"],
    )
}

#[derive(Serialize, serde::Deserialize)]
struct SplitFile {
    pos: usize,
    neg: usize,
    split: SplitManifest,
}

fn finetune_cmd(run: &Run<'_>, a: &FinetuneArgs) -> Result<()> {
    require_file(&a.base)?;
    require_dir(&a.participant)?;
    keep_inputs_untouched(&run.cli.out, &[&a.participant])?;
    run.ready()?;
    let cfg = a.hyper.resolve(run.cli.preset.train(Stage::Finetune), run.cli.seed)?;
    let (base, base_prov) = run.load_model(&a.base)?;
    let participant = load_participant(&a.participant, run.size())?;
    let split = ParticipantSplit::new(&participant, run.cli.seed)?;
    let support = split.support(a.pos, a.neg)?;
    let (model, report) = finetune(&base, &support, &cfg)?;
    save_checkpoint(&model, &report.provenance(Some(base_prov)), &run.out("model.ckpt"))?;
    report.write_csv(&run.out("train_log.csv"))?;
    let split_file = SplitFile { pos: a.pos, neg: a.neg, split: split.manifest() };
    fs::write(run.out("split.json"), serde_json::to_string_pretty(&split_file)?)?;
    run.manifest(
        "finetune",
        json!({ "arch": run.arch(), "train": cfg, "base": a.base, "participant": a.participant, "pos": a.pos, "neg": a.neg }),
        &["model.ckpt", "train_log.csv", "split.json"],
    )
}

fn score_cmd(run: &Run<'_>, a: &ScoreArgs) -> Result<()> {
    require_file(&a.model)?;
    require_dir(&a.liked)?;
    for p in &a.images {
        require_file(p)?;
    }
    run.ready()?;
    let (model, _) = run.load_model(&a.model)?;
    let refs = load_folder(&a.liked, run.size())?;
    let ref_tensors: Vec<_> = refs.iter().map(Sample::tensor).collect();
    let support = Support::encode(&model, &ref_tensors.iter().collect::<Vec<_>>())?;
    let mut rows = Vec::new();
    for p in &a.images {
        let img = stylekit::data::load_image(p, run.size(), run.size())?;
        let v = support.verdict(&model, &model.embed(&img)?, a.threshold)?;
        eprintln!("{}: {:.4} {:?}", p.display(), v.aggregate, v.decision);
        rows.push(json!({ "path": p, "verdict": v }));
    }
    fs::write(run.out("scores.json"), serde_json::to_string_pretty(&rows)?)?;
    run.manifest(
        "score",
        json!({ "model": a.model, "liked": a.liked, "threshold": a.threshold, "references": refs.len() }),
        &["scores.json"],
    )
}

fn evaluate_cmd(run: &Run<'_>, a: &EvaluateArgs) -> Result<()> {
    require_file(&a.model)?;
    require_dir(&a.participant)?;
    require_file(&a.split)?;
    run.ready()?;
    let split_file: SplitFile = serde_json::from_str(&fs::read_to_string(&a.split)?)?;
    let (model, _) = run.load_model(&a.model)?;
    let participant = load_participant(&a.participant, run.size())?;
    let by_id = |ids: &[String]| -> Result<Vec<Sample>> {
        ids.iter()
            .map(|id| {
                participant
                    .liked
                    .iter()
                    .chain(&participant.disliked)
                    .find(|s| &s.id == id)
                    .cloned()
                    .ok_or_else(|| Error::Input { path: a.participant.clone(), message: format!("{id} from the split is missing") })
            })
            .collect()
    };
    let s = &split_file.split;
    let positives = by_id(&s.train_liked[..split_file.pos.min(s.train_liked.len())])?;
    let scorer = TwinScorer::new(&model, &positives, a.threshold)?;
    let training: std::collections::BTreeSet<String> =
        s.train_liked.iter().chain(&s.train_disliked).cloned().collect();
    let report = stylekit::evaluation::evaluate(&scorer, &by_id(&s.test_liked)?, &by_id(&s.test_disliked)?, &training)?
        .tagged(&format!("eval-{}:{}", split_file.pos, split_file.neg), s.seed, split_file.pos, split_file.neg);
    eprintln!(
        "accuracy {:.2}%  TP {:.2}%  TN {:.2}%  F1 {:.3}",
        100.0 * report.accuracy,
        100.0 * report.tp_rate,
        100.0 * report.tn_rate,
        report.f1
    );
    let md = write_reports(run, &[report])?;
    eprint!("{md}");
    run.manifest(
        "evaluate",
        json!({ "model": a.model, "participant": a.participant, "split": a.split, "threshold": a.threshold }),
        &["reports.csv", "summary.md"],
    )
}

fn splits(participant: &Participant, first: u64, count: u64) -> Result<Vec<ParticipantSplit>> {
    (first..first + count).map(|s| ParticipantSplit::new(participant, s)).collect()
}

fn sweep_size_cmd(run: &Run<'_>, a: &SweepSizeArgs) -> Result<()> {
    require_file(&a.base)?;
    require_dir(&a.participant)?;
    keep_inputs_untouched(&run.cli.out, &[&a.participant])?;
    run.ready()?;
    let cfg = a.hyper.resolve(run.cli.preset.train(Stage::Finetune), run.cli.seed)?;
    let (base, _) = run.load_model(&a.base)?;
    let participant = load_participant(&a.participant, run.size())?;
    let protocol = Protocol { finetune: cfg.clone(), threshold: DEFAULT_THRESHOLD };
    let mut reports = Vec::new();
    for split in splits(&participant, run.cli.seed, a.seeds)? {
        log::info!("size sweep, split seed {}", split.seed);
        reports.extend(protocol.size_sweep(&base, &split, &a.sizes)?);
    }
    eprint!("{}", write_reports(run, &reports)?);
    run.manifest(
        "sweep-size",
        json!({ "base": a.base, "participant": a.participant, "sizes": a.sizes, "seeds": a.seeds, "finetune": cfg, "nested_subsamples": true }),
        &["reports.csv", "summary.md"],
    )
}

fn sweep_ratio_cmd(run: &Run<'_>, a: &SweepRatioArgs) -> Result<()> {
    require_file(&a.base)?;
    require_dir(&a.participant)?;
    keep_inputs_untouched(&run.cli.out, &[&a.participant])?;
    run.ready()?;
    let ratios = a.ratios.iter().map(|r| parse_ratio(r)).collect::<Result<Vec<_>>>()?;
    let cfg = a.hyper.resolve(run.cli.preset.train(Stage::Finetune), run.cli.seed)?;
    let (base, _) = run.load_model(&a.base)?;
    let participant = load_participant(&a.participant, run.size())?;
    let protocol = Protocol { finetune: cfg.clone(), threshold: DEFAULT_THRESHOLD };
    let mut reports = Vec::new();
    for split in splits(&participant, run.cli.seed, a.seeds)? {
        log::info!("ratio sweep, split seed {}", split.seed);
        reports.extend(protocol.ratio_sweep(&base, &split, &ratios)?);
    }
    eprint!("{}", write_reports(run, &reports)?);
    run.manifest(
        "sweep-ratio",
        json!({ "base": a.base, "participant": a.participant, "ratios": ratios, "seeds": a.seeds, "finetune": cfg }),
        &["reports.csv", "summary.md"],
    )
}

fn baseline_cmd(run: &Run<'_>, a: &BaselineArgs) -> Result<()> {
    require_dir(&a.participant)?;
    keep_inputs_untouched(&run.cli.out, &[&a.participant])?;
    run.ready()?;
    let cfg = a.hyper.resolve(run.cli.preset.train(Stage::Finetune), run.cli.seed)?;
    let participant = load_participant(&a.participant, run.size())?;
    let protocol = Protocol { finetune: cfg.clone(), threshold: DEFAULT_THRESHOLD };
    let pairs = if a.positives_only { ThresholdPairs::PositivesOnly } else { ThresholdPairs::Pooled };
    let label = format!("baseline-{}:{}", a.pos, a.neg);
    let mut reports = Vec::new();
    for split in splits(&participant, run.cli.seed, a.seeds)? {
        reports.push(match a.kind {
            BaselineKind::Histogram => protocol.histogram(&split, a.pos, a.neg, pairs, &label)?,
            BaselineKind::Cnn => protocol.cnn(&run.arch(), &split, a.pos, a.neg, None, &label)?,
        });
    }
    eprint!("{}", write_reports(run, &reports)?);
    run.manifest(
        "baseline",
        json!({ "kind": a.kind, "participant": a.participant, "pos": a.pos, "neg": a.neg, "seeds": a.seeds,
                "threshold_pairs": pairs, "train": cfg }),
        &["reports.csv", "summary.md"],
    )
}

fn query_cmd(run: &Run<'_>, a: &QueryArgs) -> Result<()> {
    require_file(&a.model)?;
    require_dir(&a.liked)?;
    require_dir(&a.db)?;
    keep_inputs_untouched(&run.cli.out, &[&a.db, &a.liked])?;
    run.ready()?;
    let (model, _) = run.load_model(&a.model)?;
    let refs = load_folder(&a.liked, run.size())?;
    let db = load_folder(&a.db, run.size())?;
    let ref_t: Vec<_> = refs.iter().map(Sample::tensor).collect();
    let db_t: Vec<_> = db.iter().map(Sample::tensor).collect();
    let ranked = rank_database(&model, &db_t.iter().collect::<Vec<_>>(), &ref_t.iter().collect::<Vec<_>>(), a.k)?;
    // gallery paths are absolute so the page renders from anywhere
    let paths: Vec<String> = db
        .iter()
        .map(|s| fs::canonicalize(&s.id).map(|p| p.display().to_string()).unwrap_or_else(|_| s.id.clone()))
        .collect();
    let entries = gallery_entries(&ranked, &paths);
    write_gallery(&run.cli.out, &entries)?;
    for e in &entries {
        eprintln!("#{:<3} {:.4}  {}", e.rank, e.score, e.path);
    }
    run.manifest(
        "query",
        json!({ "model": a.model, "liked": a.liked, "db": a.db, "k": a.k, "references": refs.len(), "database": db.len() }),
        &["gallery.json", "gallery.html"],
    )
}

fn run(cli: &Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Contract(format!("thread pool: {e}")))?;
    }
    let run = Run { cli, argv: std::env::args().collect() };
    match &cli.command {
        Command::GenData(a) => gen_data(&run, a),
        Command::Pretrain(a) => pretrain_cmd(&run, a),
        Command::Finetune(a) => finetune_cmd(&run, a),
        Command::Score(a) => score_cmd(&run, a),
        Command::Evaluate(a) => evaluate_cmd(&run, a),
        Command::SweepSize(a) => sweep_size_cmd(&run, a),
        Command::SweepRatio(a) => sweep_ratio_cmd(&run, a),
        Command::Baseline(a) => baseline_cmd(&run, a),
        Command::Query(a) => query_cmd(&run, a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("stylekit: {e}");
            ExitCode::from(1)
        }
    }
}
