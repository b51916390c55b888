mod common;

use std::path::Path;

use facesynth::datasets::commands::{cmd_analyze, cmd_fit, cmd_generate, cmd_train, cmd_world, RunOptions};
use facesynth::datasets::manifest::DatasetManifest;
use facesynth::datasets::tensor::read_f32;
use facesynth::datasets::PipelineConfig;
use facesynth::metrics::read_csv_report;
use facesynth::Error;

fn prepare(out: &Path) -> RunOptions {
    let opts = RunOptions::new(common::tiny_config(), out);
    cmd_world(&opts).unwrap();
    cmd_fit(&opts).unwrap();
    cmd_train(&opts).unwrap();
    opts
}

#[test]
fn generate_writes_counted_records() {
    let dir = tempfile::tempdir().unwrap();
    let opts = prepare(dir.path());
    let run = cmd_generate(&opts).unwrap();
    let m = DatasetManifest::read(&run).unwrap();
    assert_eq!(m.subjects.len(), 2);
    assert_eq!(m.images.len(), 6);
    assert_eq!(m.labels(), vec![0, 0, 0, 1, 1, 1]);
    assert_eq!(read_f32::<ndarray::Ix4>(&run.join("images.mft")).unwrap().dim(), (6, 3, 32, 32));

    let e = cmd_analyze(&opts).unwrap_err().to_string();
    assert!(e.contains("class 0 has 3 synthetic members"), "{e}");
    let mut opts = opts;
    opts.config.analysis.eir_k = 2;
    let a = cmd_analyze(&opts).unwrap();
    assert!(a.eir >= 0.0 && a.eir <= 1.0);
    let rows = read_csv_report(&run.join("metrics.csv")).unwrap();
    assert!(rows.iter().any(|r| r.metric == "eir"));
    assert!(rows.iter().any(|r| r.metric == "synth.intra_mean"));
    assert!(run.join("metrics.json").is_file());
}

#[test]
fn missing_prerequisites_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    let opts = RunOptions::new(common::tiny_config(), dir.path());
    for r in [cmd_fit(&opts).map(|_| ()), cmd_train(&opts).map(|_| ()), cmd_generate(&opts).map(|_| ()), cmd_analyze(&opts).map(|_| ())] {
        let e = r.unwrap_err();
        assert!(matches!(e, Error::MissingArtifact(_)), "{e}");
        assert_eq!(e.exit_code(), 3);
    }
}

#[test]
fn checkpoint_must_match_config() {
    let dir = tempfile::tempdir().unwrap();
    let mut opts = prepare(dir.path());
    opts.config.schedule.beta_end = 0.03;
    let e = cmd_generate(&opts).unwrap_err();
    assert!(matches!(e, Error::Config(_)), "{e}");
    assert_eq!(e.exit_code(), 2);
}

#[test]
fn config_errors_map_to_exit_code_two() {
    let e = PipelineConfig::from_json(r#"{"volumes": {"subjects": 3}}"#).unwrap_err();
    assert_eq!(e.exit_code(), 2);
}

#[test]
fn rerunning_overwrites_with_identical_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let opts = prepare(dir.path());
    let run = cmd_generate(&opts).unwrap();
    let first = std::fs::read(run.join("images.mft")).unwrap();
    let manifest = std::fs::read(run.join("manifest.json")).unwrap();
    cmd_generate(&opts).unwrap();
    assert_eq!(std::fs::read(run.join("images.mft")).unwrap(), first);
    assert_eq!(std::fs::read(run.join("manifest.json")).unwrap(), manifest);
}
