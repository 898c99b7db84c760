#![no_main]

use libfuzzer_sys::fuzz_target;
use omniwheel::simulation::read_trace_csv;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    // Written traces must read back and write out identically.
    if let Ok(trace) = read_trace_csv(text) {
        let out = trace.to_csv_string();
        let again = read_trace_csv(&out).expect("written trace reloads");
        assert_eq!(again.to_csv_string(), out);
    }
});
