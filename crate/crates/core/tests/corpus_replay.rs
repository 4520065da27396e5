//! Replays the checked-in fuzz corpus through the fuzz targets' round-trip
//! checks on stable.

use std::fs;
use std::path::PathBuf;

use flexsector::harness::{PlanDocument, Scenario, SweepResult};

fn corpus(target: &str) -> Vec<(PathBuf, String)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut files: Vec<_> = fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| e.unwrap().path())
        .collect();
    files.sort();
    assert!(!files.is_empty(), "no seeds in {}", dir.display());
    files
        .into_iter()
        .map(|p| {
            let text = fs::read_to_string(&p).unwrap();
            (p, text)
        })
        .collect()
}

#[test]
fn scenario_seeds_round_trip() {
    for (path, text) in corpus("scenario_json") {
        let s = Scenario::from_json(&text).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        assert_eq!(s.to_json(), text, "{}", path.display());
    }
}

#[test]
fn sweep_seeds_round_trip() {
    for (path, text) in corpus("sweep_csv") {
        let tables = SweepResult::parse_tables(&text).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        let written: String = tables.iter().map(SweepResult::to_csv).collect();
        assert_eq!(written, text, "{}", path.display());
    }
}

#[test]
fn plan_seeds_round_trip() {
    for (path, text) in corpus("plan_json") {
        let doc = PlanDocument::from_json(&text).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        assert_eq!(doc.to_json(), text, "{}", path.display());
    }
}

#[test]
fn truncated_seeds_are_rejected_cleanly() {
    for (_, text) in corpus("scenario_json") {
        for cut in (0..text.len()).step_by(7) {
            if text.is_char_boundary(cut) {
                let _ = Scenario::from_json(&text[..cut]);
            }
        }
    }
    for (_, text) in corpus("sweep_csv") {
        for cut in (0..text.len()).step_by(5) {
            if text.is_char_boundary(cut) {
                if let Ok(t) = SweepResult::parse_tables(&text[..cut]) {
                    let again: String = t.iter().map(SweepResult::to_csv).collect();
                    assert_eq!(SweepResult::parse_tables(&again).unwrap(), t);
                }
            }
        }
    }
}
