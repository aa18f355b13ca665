//! Replays the checked-in fuzz corpus through every parser entry point.

use std::path::PathBuf;

use landmarks::dataset::{parse_csv, DropColumn};
use landmarks::harness::{parse_config_text, ExperimentConfig};
use landmarks::rff::{decode_features, encode_features};

fn corpus(target: &str) -> Vec<(String, Vec<u8>)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fuzz/corpus").join(target);
    let mut files: Vec<_> = std::fs::read_dir(&dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file())
        .collect();
    files.sort();
    assert!(!files.is_empty(), "empty corpus {}", dir.display());
    files
        .into_iter()
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect()
}

#[test]
fn csv_corpus() {
    let mut accepted = 0;
    for (name, bytes) in corpus("parse_csv") {
        if let Ok(table) = parse_csv(bytes.as_slice(), None) {
            accepted += 1;
            if let Some(h) = &table.header {
                assert_eq!(h.len(), table.values.ncols(), "{name}");
            }
            let _ = parse_csv(bytes.as_slice(), Some(&DropColumn::Index(0)));
            let _ = landmarks::standardize(&table.values);
        }
    }
    assert!(accepted >= 2);
}

#[test]
fn config_corpus() {
    let mut valid = Vec::new();
    for (name, bytes) in corpus("parse_config") {
        let Ok(text) = std::str::from_utf8(&bytes) else { continue };
        if let Ok(map) = parse_config_text(text) {
            if ExperimentConfig::from_map(&map).is_ok() {
                valid.push(name);
            }
        }
    }
    assert!(valid.contains(&"full.cfg".to_string()), "{valid:?}");
    assert!(!valid.contains(&"duplicate.cfg".to_string()));
    assert!(!valid.contains(&"malformed.cfg".to_string()));
}

#[test]
fn feature_cache_corpus() {
    let mut decoded = 0;
    for (name, bytes) in corpus("decode_features") {
        if let Ok(m) = decode_features(&bytes) {
            decoded += 1;
            assert_eq!(encode_features(&m), bytes, "{name}");
        }
    }
    assert_eq!(decoded, 2);
}
