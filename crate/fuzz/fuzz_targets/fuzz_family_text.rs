#![no_main]

use libfuzzer_sys::fuzz_target;
use rlplab::family::IntervalFamily;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(fam) = IntervalFamily::from_text(text) else { return };
    let again = IntervalFamily::from_text(&fam.to_text()).expect("serialized form parses");
    assert_eq!(fam.intervals(), again.intervals());
});
