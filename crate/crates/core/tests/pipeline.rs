use stylekit::baselines::ThresholdPairs;
use stylekit::checkpoint::{load_checkpoint, save_checkpoint};
use stylekit::comparison::{gallery_entries, rank_database, write_gallery};
use stylekit::data::synth::{participant_styles, pretrain_catalog};
use stylekit::data::{generate_style_dataset, load_dataset, write_dataset, ImageTensor, Sample};
use stylekit::evaluation::{summarize, Participant, ParticipantSplit, Protocol};
use stylekit::models::{ArchConfig, JuxtapositionNetwork};
use stylekit::training::{pretrain, Stage, TrainConfig};

fn tiny_participant(seed: u64) -> Participant {
    let (l, d) = participant_styles(0.5);
    Participant {
        liked: generate_style_dataset(&[l], 70, 32, seed).unwrap(),
        disliked: generate_style_dataset(&[d], 70, 32, seed).unwrap(),
    }
}

fn tiny_pretrained() -> JuxtapositionNetwork {
    let corpus = generate_style_dataset(&pretrain_catalog()[..3], 8, 32, 1).unwrap();
    let cfg = TrainConfig {
        epochs: 1,
        pairs_per_epoch: Some(16),
        batch_size: 8,
        val_fraction: 0.25,
        seed: 2,
        ..TrainConfig::desk(Stage::Pretrain)
    };
    pretrain(&ArchConfig::tiny(), &corpus, &cfg).unwrap().0
}

#[test]
fn protocol_runs_every_experiment_on_one_split() {
    let pre = tiny_pretrained();
    let split = ParticipantSplit::new(&tiny_participant(3), 0).unwrap();
    let protocol = Protocol {
        finetune: TrainConfig { epochs: 1, batch_size: 8, ..TrainConfig::desk(Stage::Finetune) },
        threshold: 0.5,
    };
    let mut reports = protocol.size_sweep(&pre, &split, &[1, 2]).unwrap();
    reports.extend(protocol.ratio_sweep(&pre, &split, &[(2, 1), (1, 2)]).unwrap());
    reports.push(protocol.histogram(&split, 2, 2, ThresholdPairs::Pooled, "hist").unwrap());
    reports.push(protocol.cnn(&ArchConfig::tiny(), &split, 2, 2, None, "cnn").unwrap());
    for r in &reports {
        assert_eq!(r.total(), 100, "{}", r.label);
        assert_eq!(r.tp + r.fn_, 50);
        assert!((r.accuracy - (r.tp + r.tn) as f64 / 100.0).abs() < 1e-15);
    }
    let labels: Vec<&str> = reports.iter().map(|r| r.label.as_str()).collect();
    assert_eq!(labels, ["size-1", "size-2", "ratio-2:1", "ratio-1:2", "hist", "cnn"]);
    assert_eq!((reports[2].train_pos, reports[2].train_neg), (2, 1));
    assert_eq!(summarize(&reports).len(), 6);
}

#[test]
fn checkpoint_and_dataset_survive_the_filesystem() {
    let dir = tempfile::tempdir().unwrap();
    let mut samples = generate_style_dataset(&pretrain_catalog()[..2], 3, 32, 5).unwrap();
    write_dataset(dir.path(), &samples).unwrap();
    let back = load_dataset(dir.path(), 32).unwrap();
    assert_eq!(back.len(), 6);
    // the loader walks class directories in name order
    samples.sort_by(|a, b| a.class.cmp(&b.class));
    for (a, b) in samples.iter().zip(&back) {
        assert_eq!(a.class, b.class);
        assert_eq!(a.raw, b.raw, "PNG round trip is lossless");
    }

    let pre = tiny_pretrained();
    let path = dir.path().join("m.ckpt");
    save_checkpoint(&pre, &Default::default(), &path).unwrap();
    let (loaded, _): (JuxtapositionNetwork, _) = load_checkpoint(&path, Some(&ArchConfig::tiny())).unwrap();
    let imgs: Vec<ImageTensor> = back.iter().map(Sample::tensor).collect();
    let refs: Vec<&ImageTensor> = imgs.iter().collect();
    let a = rank_database(&pre, &refs, &refs[..2], 4).unwrap();
    let b = rank_database(&loaded, &refs, &refs[..2], 4).unwrap();
    assert_eq!(a, b);

    let paths: Vec<String> = back.iter().map(|s| s.id.clone()).collect();
    let (json, html) = write_gallery(dir.path(), &gallery_entries(&a, &paths)).unwrap();
    let parsed: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(json).unwrap()).unwrap();
    assert_eq!(parsed.as_array().unwrap().len(), 4);
    assert!(std::fs::read_to_string(html).unwrap().contains("<img"));
}
