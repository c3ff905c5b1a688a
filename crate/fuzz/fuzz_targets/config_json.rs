//! Scenario config parsing and validation must never panic. Configs that
//! validate must build their system and parse again after serialization.

#![no_main]

use gravcollapse::scenario::ScenarioConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(cfg) = ScenarioConfig::from_json_bytes(data) {
        ScenarioConfig::from_json_str(&cfg.to_json_pretty()).expect("validated config re-parses");
        let _ = cfg.system();
    }
});
