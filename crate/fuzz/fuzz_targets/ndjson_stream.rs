#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(stream) = morph::data::parse_ndjson_stream(data) {
        stream.validate().expect("accepted stream violates invariants");
        // Round-trip: anything we accept we can also write and re-read.
        let mut buf = Vec::new();
        morph::data::write_ndjson_stream(&mut buf, &stream).unwrap();
        let back = morph::data::parse_ndjson_stream(&buf[..]).unwrap();
        assert_eq!(back, stream);
    }
});
