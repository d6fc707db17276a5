#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(src) = std::str::from_utf8(data) {
        if let Err(e) = declab_cli::scenario::parse_str(src) {
            // every rejection carries at least one issue or an I/O cause
            let _ = e.to_string();
        }
    }
});
