//! Scenario loader: arbitrary text must either be rejected or survive a
//! save/load cycle unchanged.
#![no_main]
use libfuzzer_sys::fuzz_target;

use flexsector::harness::Scenario;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(scenario) = Scenario::from_json(text) {
        let again = Scenario::from_json(&scenario.to_json()).expect("saved scenario reloads");
        assert_eq!(again, scenario);
    }
});
