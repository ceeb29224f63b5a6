#![no_main]

use libfuzzer_sys::fuzz_target;
use rlplab::signal::Signal;

// Parsing must never panic; anything accepted must survive a text
// round-trip bit for bit.
fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(sig) = Signal::from_text(text) else { return };
    let again = Signal::from_text(&sig.to_text()).expect("serialized form parses");
    assert_eq!(sig.n(), again.n());
    assert_eq!(sig.domain_length(), again.domain_length());
    assert_eq!(sig.samples(), again.samples());
});
