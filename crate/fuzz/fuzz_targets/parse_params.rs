#![no_main]

use libfuzzer_sys::fuzz_target;
use omniwheel::model::{load_params, params_to_toml};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(p) = load_params(text) {
        let out = params_to_toml(&p);
        let again = load_params(&out).expect("written params reload");
        assert_eq!(params_to_toml(&again), out);
    }
});
