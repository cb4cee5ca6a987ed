#![no_main]
use carleman_lab::config::ExperimentConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(cfg) = ExperimentConfig::from_toml(text) {
            // anything accepted must survive a round trip unchanged
            let again = ExperimentConfig::from_toml(&cfg.to_toml()).expect("re-parse");
            assert_eq!(cfg, again);
        }
    }
});
