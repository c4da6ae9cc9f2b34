use std::path::PathBuf;

use polyfeedback::harness::{config_schema, preset, ExperimentConfig, PRESETS};

fn configs() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

#[test]
fn shipped_presets_match_code() {
    for name in PRESETS {
        let cfg = ExperimentConfig::from_file(&configs().join(format!("{name}.json"))).unwrap();
        assert_eq!(cfg, preset(name).unwrap(), "{name}");
    }
}

#[test]
fn shipped_schema_is_current() {
    let shipped = std::fs::read_to_string(configs().join("experiment.schema.json")).unwrap();
    assert_eq!(shipped, config_schema());
}

#[test]
fn every_shipped_config_validates() {
    for entry in std::fs::read_dir(configs()).unwrap() {
        let path = entry.unwrap().path();
        let name = path.file_name().unwrap().to_string_lossy().to_string();
        if name.ends_with(".json") && !name.contains("schema") {
            ExperimentConfig::from_file(&path).unwrap_or_else(|e| panic!("{name}: {e}"));
        }
    }
}
