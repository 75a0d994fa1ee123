#![no_main]

use invlab::config::Config;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(c) = Config::parse(text) {
        let again = Config::parse(&c.to_text()).expect("resolved text parses");
        assert_eq!(again.hash(), c.hash());
    }
});
