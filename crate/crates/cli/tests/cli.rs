use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn stylekit(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stylekit"))
        .arg("--out")
        .arg(out)
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(out: &Path, args: &[&str]) {
    let o = stylekit(out, args);
    assert!(o.status.success(), "{args:?} failed:\n{}", String::from_utf8_lossy(&o.stderr));
}

fn manifest(dir: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Workspace {
    _tmp: tempfile::TempDir,
    root: PathBuf,
}

impl Workspace {
    fn new() -> Self {
        let tmp = tempfile::tempdir().unwrap();
        let root = tmp.path().to_path_buf();
        Workspace { _tmp: tmp, root }
    }

    fn dir(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }
}

#[test]
fn full_pipeline_runs_end_to_end() {
    let ws = Workspace::new();
    let (corpus, participant, foreign) = (ws.dir("corpus"), ws.dir("participant"), ws.dir("foreign"));
    ok(&corpus, &["--seed", "3", "gen-data", "--specs", "2", "--per-class", "6"]);
    ok(&participant, &["--seed", "4", "gen-data", "--kind", "participant"]);
    ok(&foreign, &["--seed", "5", "gen-data", "--kind", "foreign", "--per-class", "3"]);
    assert_eq!(std::fs::read_dir(participant.join("liked")).unwrap().count(), 70);
    assert_eq!(manifest(&participant)["command"], "gen-data");

    let pre = ws.dir("pre");
    ok(&pre, &["pretrain", "--data", s(&corpus), "--epochs", "1", "--pairs-per-epoch", "8"]);
    assert!(pre.join("model.ckpt").is_file());
    let log = std::fs::read_to_string(pre.join("train_log.csv")).unwrap();
    assert_eq!(log.lines().count(), 3, "header, initial and one epoch:\n{log}");

    let ft = ws.dir("ft");
    let base = pre.join("model.ckpt");
    ok(&ft, &["--seed", "2", "finetune", "--base", s(&base), "--participant", s(&participant), "--pos", "2", "--neg", "1", "--epochs", "1"]);
    let split: Value = serde_json::from_str(&std::fs::read_to_string(ft.join("split.json")).unwrap()).unwrap();
    assert_eq!(split["split"]["test_liked"].as_array().unwrap().len(), 50);
    assert_eq!(manifest(&ft)["config"]["train"]["seed"], 2);

    let ev = ws.dir("eval");
    let model = ft.join("model.ckpt");
    ok(&ev, &["evaluate", "--model", s(&model), "--participant", s(&participant), "--split", s(&ft.join("split.json"))]);
    let csv = std::fs::read_to_string(ev.join("reports.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);

    let sc = ws.dir("score");
    let img = participant.join("disliked").join("000.png");
    ok(&sc, &["score", "--model", s(&model), "--liked", s(&foreign.join("neon-blobs")), s(&img)]);
    let scores: Value = serde_json::from_str(&std::fs::read_to_string(sc.join("scores.json")).unwrap()).unwrap();
    let v = &scores[0]["verdict"];
    assert_eq!(v["scores"].as_array().unwrap().len(), 3);
    assert!((0.0..=1.0).contains(&v["aggregate"].as_f64().unwrap()));

    let q = ws.dir("query");
    ok(&q, &["query", "--model", s(&model), "--liked", s(&foreign.join("neon-blobs")), "--db", s(&foreign), "--k", "4"]);
    let gallery: Value = serde_json::from_str(&std::fs::read_to_string(q.join("gallery.json")).unwrap()).unwrap();
    let entries = gallery.as_array().unwrap();
    assert_eq!(entries.len(), 4);
    let scores: Vec<f64> = entries.iter().map(|e| e["score"].as_f64().unwrap()).collect();
    assert!(scores.windows(2).all(|w| w[0] >= w[1]));
    assert!(q.join("gallery.html").is_file());

    let sw = ws.dir("sweep");
    ok(&sw, &["sweep-size", "--base", s(&base), "--participant", s(&participant), "--sizes", "1,2", "--seeds", "1", "--epochs", "1"]);
    let csv = std::fs::read_to_string(sw.join("reports.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    assert!(sw.join("summary.md").is_file());

    let rt = ws.dir("ratio");
    ok(&rt, &["sweep-ratio", "--base", s(&base), "--participant", s(&participant), "--ratios", "2:1,1:2", "--seeds", "1", "--epochs", "1"]);
    assert_eq!(std::fs::read_to_string(rt.join("reports.csv")).unwrap().lines().count(), 3);

    let hb = ws.dir("hist");
    ok(&hb, &["baseline", "--kind", "histogram", "--participant", s(&participant), "--seeds", "2"]);
    assert_eq!(std::fs::read_to_string(hb.join("reports.csv")).unwrap().lines().count(), 3);
    let cb = ws.dir("cnn");
    ok(&cb, &["baseline", "--kind", "cnn", "--participant", s(&participant), "--seeds", "1", "--pos", "2", "--neg", "2", "--epochs", "1"]);
    assert_eq!(manifest(&cb)["config"]["kind"], "cnn");
}

#[test]
fn usage_errors_exit_with_two() {
    let ws = Workspace::new();
    let o = stylekit(&ws.dir("x"), &["no-such-command"]);
    assert_eq!(o.status.code(), Some(2));
    let o = stylekit(&ws.dir("x"), &["baseline", "--kind", "nope", "--participant", "p"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn missing_inputs_fail_before_any_work() {
    let ws = Workspace::new();
    let out = ws.dir("out");
    let o = stylekit(&out, &["pretrain", "--data", s(&ws.dir("absent"))]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("absent"));
    assert!(!out.join("model.ckpt").exists());
    assert!(!out.join("manifest.json").exists());
}

#[test]
fn output_inside_an_input_is_refused() {
    let ws = Workspace::new();
    let participant = ws.dir("participant");
    ok(&participant, &["gen-data", "--kind", "participant", "--per-class", "2"]);
    let o = stylekit(&participant.join("runs"), &["baseline", "--kind", "histogram", "--participant", s(&participant)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("inside input"));
    assert!(!participant.join("runs").exists());
}

#[test]
fn architecture_mismatch_is_reported() {
    let ws = Workspace::new();
    let corpus = ws.dir("corpus");
    ok(&corpus, &["gen-data", "--specs", "2", "--per-class", "3"]);
    let pre = ws.dir("pre");
    ok(&pre, &["pretrain", "--data", s(&corpus), "--epochs", "0"]);
    let o = stylekit(&ws.dir("q"), &["--preset", "paper", "query", "--model", s(&pre.join("model.ckpt")), "--liked", s(&corpus), "--db", s(&corpus)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("architecture mismatch"));
}

#[test]
fn data_generation_is_reproducible() {
    let ws = Workspace::new();
    let (a, b) = (ws.dir("a"), ws.dir("b"));
    ok(&a, &["--seed", "9", "gen-data", "--kind", "foreign", "--per-class", "2"]);
    ok(&b, &["--seed", "9", "gen-data", "--kind", "foreign", "--per-class", "2"]);
    for class in ["neon-checker", "neon-blobs", "earth-checker"] {
        let mut names: Vec<_> = std::fs::read_dir(a.join(class)).unwrap().map(|e| e.unwrap().file_name()).collect();
        names.sort();
        assert_eq!(names.len(), 2);
        for n in names {
            assert_eq!(std::fs::read(a.join(class).join(&n)).unwrap(), std::fs::read(b.join(class).join(&n)).unwrap());
        }
    }
}
