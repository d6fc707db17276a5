#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(spec) = std::str::from_utf8(data) {
        if let Ok(values) = declab_cli::sweep::parse_axis(spec) {
            assert!(!values.is_empty() && values.len() <= declab_cli::sweep::MAX_SWEEP_POINTS);
            assert!(values.windows(2).all(|w| w[0] < w[1]));
            assert!(values.iter().all(|v| v.is_finite()));
        }
    }
});
