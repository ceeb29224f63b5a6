#![no_main]

use libfuzzer_sys::fuzz_target;
use rlplab::dyadic::SparseFamily;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(sf) = SparseFamily::from_text(text) else { return };
    let again = SparseFamily::from_text(&sf.to_text()).expect("serialized form parses");
    assert_eq!(sf.n, again.n);
    assert_eq!(sf.eta, again.eta);
    assert_eq!(sf.members.len(), again.members.len());
    for (a, b) in sf.members.iter().zip(&again.members) {
        assert_eq!(a.interval, b.interval);
        assert_eq!(a.witness, b.witness);
    }
});
