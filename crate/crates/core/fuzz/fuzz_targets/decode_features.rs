#![no_main]

use landmarks::rff::{decode_features, encode_features};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(m) = decode_features(data) {
        assert_eq!(encode_features(&m), data);
    }
});
