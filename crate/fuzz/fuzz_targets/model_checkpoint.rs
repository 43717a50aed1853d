#![no_main]

use libfuzzer_sys::fuzz_target;
use morph::nn::MlpModel;

fuzz_target!(|data: &[u8]| {
    if let Ok(model) = MlpModel::from_checkpoint_bytes(data) {
        // Anything accepted must be a usable, finite model that round-trips.
        assert!(model.is_finite());
        let json = model.to_checkpoint_json();
        let back = MlpModel::from_checkpoint_bytes(json.as_bytes()).expect("echo parses");
        assert_eq!(back, model);
    }
});
