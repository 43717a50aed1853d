#![no_main]

use libfuzzer_sys::fuzz_target;
use morph::experiment::ExperimentConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(config) = ExperimentConfig::from_toml_str(text) {
        // Validation must be total; echoing a parsed config must round-trip.
        if config.resolve().is_ok() {
            let echoed = config.to_toml_string();
            let back = ExperimentConfig::from_toml_str(&echoed).expect("echo parses");
            assert_eq!(back, config);
        }
    }
});
