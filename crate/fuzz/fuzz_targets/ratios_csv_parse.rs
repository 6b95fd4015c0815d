#![no_main]

use hedgeforest::bench::{read_ratios_csv, summarize};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(rows) = read_ratios_csv(data) {
        let _ = summarize(&rows);
    }
});
