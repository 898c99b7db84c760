#![no_main]

use libfuzzer_sys::fuzz_target;
use omniwheel_teleop::decode_command;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(env) = decode_command(text) {
        assert_eq!(decode_command(&env.to_json()), Ok(env));
    }
});
