#![no_main]

use libfuzzer_sys::fuzz_target;
use mlmoments::io::RunManifest;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(m) = RunManifest::parse(text) {
        RunManifest::parse(&m.render()).expect("rendered manifest must parse");
    }
});
