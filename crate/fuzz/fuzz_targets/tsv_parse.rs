#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(ds) = hedgeforest::data::parse_tsv(data, "target", "fuzz") {
        assert_eq!(ds.features.nrows(), ds.target.len());
        assert_eq!(ds.features.ncols(), ds.column_names.len());
        assert!(ds.features.iter().chain(&ds.target).all(|v| v.is_finite()));
    }
});
