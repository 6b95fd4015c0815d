#![no_main]

use hedgeforest::forest::FittedForest;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(forest) = FittedForest::from_json(data) {
        // a forest that loads must be safe to evaluate
        let row = vec![0.5; forest.n_features];
        let _ = forest.predict(&row);
    }
});
