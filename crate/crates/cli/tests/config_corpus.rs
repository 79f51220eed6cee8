use std::path::PathBuf;

use voodoo_cli::config::{parse_config, Command, ExperimentConfig};

#[test]
fn config_fuzz_seeds() {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus/config");
    let mut outcomes = Vec::new();
    for entry in std::fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        let name = path.file_name().unwrap().to_string_lossy().into_owned();
        let text = std::fs::read_to_string(&path).unwrap();
        let resolved = parse_config(&text).and_then(|s| ExperimentConfig::resolve(&s, None, Command::Train));
        outcomes.push((name, resolved.is_ok()));
    }
    outcomes.sort();
    let ok: Vec<&str> = outcomes.iter().filter(|o| o.1).map(|o| o.0.as_str()).collect();
    assert_eq!(ok, ["seed-comments-only", "seed-full", "seed-minimal"], "{outcomes:?}");
}
