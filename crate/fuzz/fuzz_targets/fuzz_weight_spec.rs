#![no_main]

use libfuzzer_sys::fuzz_target;
use rlplab::weights::WeightSpec;

// Accepted specs must materialize on a small grid without panicking
// and only ever produce strictly positive finite values.
fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(spec) = WeightSpec::parse(text) else { return };
    if matches!(spec, WeightSpec::File(_)) {
        return;
    }
    if let Ok(w) = spec.build(64, 1.0) {
        for v in w.samples() {
            assert!(v.is_finite() && *v > 0.0, "bad weight value {v}");
        }
    }
});
