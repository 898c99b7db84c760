#![no_main]

use libfuzzer_sys::fuzz_target;
use omniwheel::control::{gains_to_toml, load_gains};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(g) = load_gains(text) {
        let out = gains_to_toml(&g);
        let again = load_gains(&out).expect("written gains reload");
        assert_eq!(gains_to_toml(&again), out);
    }
});
