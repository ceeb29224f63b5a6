#![no_main]

use libfuzzer_sys::fuzz_target;
use rlplab::family::FamilySpec;

// Accepted specs must build on a small grid without panicking; the
// builder may still reject parameters, but only through an error.
fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(spec) = FamilySpec::parse(text) else { return };
    if matches!(spec, FamilySpec::File(_)) {
        return;
    }
    if let Ok(fam) = spec.build(64) {
        for w in fam.intervals() {
            assert!(w.a < w.b && w.b <= 64, "interval out of range: {w:?}");
        }
    }
});
