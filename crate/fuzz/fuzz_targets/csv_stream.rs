#![no_main]

use libfuzzer_sys::fuzz_target;

// The CSV stream loader must reject arbitrary bytes with an error, never a
// panic. Successful parses additionally have to satisfy the stream
// invariants.
fuzz_target!(|data: &[u8]| {
    if let Ok(stream) = morph::data::parse_csv_stream(data) {
        stream.validate().expect("accepted stream violates invariants");
    }
});
