#![no_main]
use libfuzzer_sys::fuzz_target;

use flexsector::harness::PlanDocument;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(doc) = PlanDocument::from_json(text) {
        let again = PlanDocument::from_json(&doc.to_json()).expect("written plan reloads");
        assert_eq!(again, doc);
    }
});
