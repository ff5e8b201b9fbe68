use std::path::Path;
use std::process::Command;

use rankood::ScoreReport;
use rankood_cli::stages::{self, summarize};
use rankood_cli::{run_stage, CliError, PipelineConfig, Workspace};

fn small() -> PipelineConfig {
    let mut cfg = PipelineConfig::default();
    cfg.synth.n_classes = 4;
    cfg.synth.feature_dim = 8;
    cfg.synth.samples_per_class = 60;
    cfg.train.epochs = 10;
    cfg.train.hidden = vec![8];
    cfg
}

fn chain(root: &Path, cfg: &PipelineConfig, upto: &str) {
    for stage in stages::ALL {
        run_stage(root, stage, cfg).unwrap();
        if stage == upto {
            break;
        }
    }
}

fn rankood(root: &Path, args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_rankood")).args(args).env("RANKOOD_OUT", root).output().unwrap()
}

#[test]
fn synth_rerun_matches_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["synth", "--classes", "4", "--dim", "8", "--samples-per-class", "10", "--seed", "7"];
    assert!(rankood(dir.path(), &args).status.success());
    let first = std::fs::read(dir.path().join("manifest.json")).unwrap();
    assert!(rankood(dir.path(), &args).status.success());
    assert_eq!(std::fs::read(dir.path().join("manifest.json")).unwrap(), first);
    let ws = Workspace::open(dir.path()).unwrap();
    assert!(ws.manifest().verify(dir.path()).is_ok());
    assert_eq!(ws.manifest().entries.len(), 6);
}

#[test]
fn invalid_spec_exits_with_validation_code() {
    let dir = tempfile::tempdir().unwrap();
    let out = rankood(dir.path(), &["synth", "--classes", "2"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("n_classes"));
}

#[test]
fn missing_upstream_names_the_producer() {
    let dir = tempfile::tempdir().unwrap();
    let out = rankood(dir.path(), &["train-ce"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("`rankood synth`"));

    let cfg = small();
    chain(dir.path(), &cfg, stages::TRAIN_RANK);
    std::fs::remove_file(dir.path().join("canon/canonical.json")).unwrap();
    match run_stage(dir.path(), stages::PROFILE, &cfg) {
        Err(e @ CliError::Dependency { producer: "canon", .. }) => assert_eq!(e.exit_code(), 3),
        other => panic!("expected a dependency error, got {other:?}"),
    }
}

#[test]
fn stale_input_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small();
    chain(dir.path(), &cfg, stages::SYNTH);
    let train = dir.path().join("data/train.bin");
    let mut bytes = std::fs::read(&train).unwrap();
    *bytes.last_mut().unwrap() ^= 1;
    std::fs::write(&train, bytes).unwrap();
    match run_stage(dir.path(), stages::TRAIN_CE, &cfg) {
        Err(CliError::Dependency { producer: "synth", reason, .. }) => assert!(reason.contains("stale")),
        other => panic!("expected a stale dependency, got {other:?}"),
    }
}

#[test]
fn divergence_exits_with_numerical_code() {
    let dir = tempfile::tempdir().unwrap();
    let base = ["--classes", "4", "--dim", "8", "--samples-per-class", "10"];
    assert!(rankood(dir.path(), &[&["synth"][..], &base].concat()).status.success());
    let out = rankood(dir.path(), &[&["train-ce", "--lr", "1e12", "--epochs", "5"][..], &base].concat());
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn every_stage_echoes_its_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small();
    chain(dir.path(), &cfg, stages::EVAL);
    for sub in ["data", "ce", "rpm", "canon", "rank", "profile", "scores", "eval"] {
        let echoed = PipelineConfig::load(&dir.path().join(sub).join("config.json")).unwrap();
        assert_eq!(echoed, cfg, "{sub}");
    }
    let ws = Workspace::open(dir.path()).unwrap();
    ws.manifest().verify(dir.path()).unwrap();
}

#[test]
fn partial_config_file_keeps_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cfg.json");
    std::fs::write(&path, r#"{"synth": {"n_classes": 5, "feature_dim": 9}, "gamma": 2.0}"#).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_rankood"))
        .args(["show-config", "--config", path.to_str().unwrap(), "--epochs", "7"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let cfg: PipelineConfig = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(cfg.synth.n_classes, 5);
    assert_eq!(cfg.synth.samples_per_class, 300);
    assert_eq!(cfg.train.epochs, 7);
    assert_eq!(cfg.gamma, 2.0);

    std::fs::write(&path, r#"{"gama": 2.0}"#).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_rankood"))
        .args(["show-config", "--config", path.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn perfect_separation_reports_full_auroc() {
    let report = ScoreReport::new("rankood", vec![2.0, 3.0], vec![0.0, 1.0]).unwrap();
    let rows = summarize(&[report], &PipelineConfig::default()).unwrap();
    assert_eq!(rows[0].auroc, 1.0);
    assert_eq!(rows[0].fpr95, 0.0);
    let csv = stages::summaries_csv(&rows);
    assert_eq!(csv.lines().nth(1).unwrap(), "rankood,2,2,1.0,0.0,2.0");
}

#[test]
fn external_logits_feed_the_rpm_stage() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small();
    chain(dir.path(), &cfg, stages::TRAIN_CE);
    let csv = dir.path().join("external.csv");
    let logits = rankood::tensor_io::read_logits(
        &dir.path().join("ce/logits/train.bin"),
        rankood::MatrixFormat::Binary,
        rankood::SplitTag::Train,
    )
    .unwrap();
    rankood::tensor_io::write_logits(&logits, &csv, rankood::MatrixFormat::Csv).unwrap();
    run_stage(dir.path(), stages::RPM, &cfg).unwrap();
    let internal = std::fs::read(dir.path().join("rpm/class_0.csv")).unwrap();
    let ext = PipelineConfig { rpm_logits: Some(csv), ..cfg };
    run_stage(dir.path(), stages::RPM, &ext).unwrap();
    assert_eq!(std::fs::read(dir.path().join("rpm/class_0.csv")).unwrap(), internal);
}
