#![no_main]

use hedgeforest::hedge::{Kappa, WinhamRule};
use hedgeforest::moments::Estimator;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(k) = s.parse::<Kappa>() {
        assert!(k.value() >= 1.0);
        assert_eq!(k.to_string().parse::<Kappa>().unwrap(), k);
    }
    let _ = s.parse::<Estimator>();
    let _ = s.parse::<WinhamRule>();
});
