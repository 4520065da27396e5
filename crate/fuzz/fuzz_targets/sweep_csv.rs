#![no_main]
use libfuzzer_sys::fuzz_target;

use flexsector::harness::SweepResult;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(tables) = SweepResult::parse_tables(text) {
        let written: String = tables.iter().map(SweepResult::to_csv).collect();
        let again = SweepResult::parse_tables(&written).expect("written tables reload");
        assert_eq!(again, tables);
    }
});
