#![no_main]

use landmarks::harness::{parse_config_text, ExperimentConfig};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(map) = parse_config_text(text) {
        let _ = ExperimentConfig::from_map(&map);
    }
});
