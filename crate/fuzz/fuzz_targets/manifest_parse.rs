#![no_main]

use hedgeforest::bench::RunManifest;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(m) = RunManifest::from_json(text) {
        let _ = RunManifest::from_json(&m.to_json()).expect("manifest round trip");
    }
});
