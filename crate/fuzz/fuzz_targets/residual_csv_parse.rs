#![no_main]

use hedgeforest::forest::ResidualMatrix;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(r) = ResidualMatrix::parse_csv(data) {
        assert!(r.n() > 0 && r.p() > 0);
        let mut out = Vec::new();
        r.write_csv(&mut out).unwrap();
        let again = ResidualMatrix::parse_csv(out.as_slice()).unwrap();
        assert_eq!(again.values, r.values);
    }
});
