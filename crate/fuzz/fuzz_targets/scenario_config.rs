#![no_main]

use binfleet_core::simulation::ScenarioConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(cfg) = ScenarioConfig::from_json(data) {
        // valid configs survive a round trip and hash stably
        let bytes = serde_json::to_vec(&cfg).unwrap();
        let again = ScenarioConfig::from_json(&bytes).expect("re-encoded config is valid");
        assert_eq!(again.config_hash(), cfg.config_hash());
    }
});
