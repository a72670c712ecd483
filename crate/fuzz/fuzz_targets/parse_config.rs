#![no_main]

use consensus_splitting::config::ExperimentConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(cfg) = ExperimentConfig::parse(text) {
            let again = ExperimentConfig::parse(&cfg.dump()).expect("dumped config parses");
            assert_eq!(again, cfg);
        }
    }
});
