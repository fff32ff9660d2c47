use std::path::PathBuf;

use swarmguard::pipeline::{ErrorClass, PipelineConfig};

#[test]
fn defaults_validate_and_round_trip() {
    let cfg = PipelineConfig::default();
    cfg.validate().unwrap();
    let text = serde_json::to_string(&cfg).unwrap();
    assert_eq!(serde_json::from_str::<PipelineConfig>(&text).unwrap(), cfg);
}

#[test]
fn minimal_file_takes_defaults() {
    let cfg: PipelineConfig = serde_json::from_str(r#"{"schema_version": 1, "seed": 4}"#).unwrap();
    assert_eq!(cfg, PipelineConfig { seed: 4, ..PipelineConfig::default() });
}

#[test]
fn hash_ignores_output_directory_only() {
    let a = PipelineConfig::default();
    let b = PipelineConfig { out_dir: PathBuf::from("/elsewhere"), ..a.clone() };
    let c = PipelineConfig { seed: 1, ..a.clone() };
    assert_eq!(a.hash(), b.hash());
    assert_ne!(a.hash(), c.hash());
    assert_eq!(a.hash().len(), 64);
}

#[test]
fn invalid_settings_are_config_errors() {
    let mut nine = PipelineConfig::default();
    nine.scenario.ranges.vertices = [3, 9];
    let mut fpr = PipelineConfig::default();
    fpr.detection.fpr_levels = vec![0.05, 1.0];
    let mut version = PipelineConfig::default();
    version.schema_version = 7;
    let mut empty = PipelineConfig::default();
    empty.scale.n_train = 0;
    for cfg in [nine, fpr, version, empty] {
        assert_eq!(cfg.validate().unwrap_err().class(), ErrorClass::Config);
    }
}

#[test]
fn unknown_keys_are_rejected() {
    let text = r#"{"schema_version": 1, "scale": {"n_train": 3, "n_tests": 2}}"#;
    assert!(serde_json::from_str::<PipelineConfig>(text).is_err());
}
