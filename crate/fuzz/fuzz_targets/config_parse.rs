#![no_main]

use libfuzzer_sys::fuzz_target;
use mlmoments::io::{parse_list, Config};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let _ = parse_list(text);
    if let Ok(cfg) = Config::parse(text) {
        let rendered = cfg.render();
        let again = Config::parse(&rendered).expect("rendered config must parse");
        assert_eq!(again.render(), rendered);
    }
});
