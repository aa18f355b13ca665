#![no_main]

use landmarks::dataset::{parse_csv, DropColumn};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(table) = parse_csv(data, None) {
        if let Some(h) = &table.header {
            assert_eq!(h.len(), table.values.ncols());
        }
        let _ = parse_csv(data, Some(&DropColumn::Index(0)));
        let _ = landmarks::standardize(&table.values);
    }
});
