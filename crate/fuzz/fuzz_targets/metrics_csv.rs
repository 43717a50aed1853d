#![no_main]

use libfuzzer_sys::fuzz_target;

// `compare` reads metrics files back from run directories; hand-edited or
// truncated files must surface as errors, not panics.
fuzz_target!(|data: &[u8]| {
    let _ = morph::metrics::read_metrics_csv(data);
});
