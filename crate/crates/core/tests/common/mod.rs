#![allow(dead_code)]

use std::path::PathBuf;

use hindsight::dynexec::Schedule;
use hindsight::ir::{parse_program, parse_spec_file, ProgramBundle, SpecSet};

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

pub fn example() -> ProgramBundle {
    parse_program(&std::fs::read_to_string(fixture("running_example.ir")).unwrap()).unwrap()
}

/// Running-example bundle with the named spec files merged in.
pub fn example_with(specs: &[&str]) -> (ProgramBundle, SpecSet) {
    let mut b = example();
    let mut active = SpecSet::new();
    for s in specs {
        let text = std::fs::read_to_string(fixture(&format!("running_example_specs/{s}.spec"))).unwrap();
        active.extend(b.merge_specs(parse_spec_file(&text).unwrap()).unwrap());
    }
    (b, active)
}

pub fn example_schedules() -> Vec<Schedule> {
    vec!["0".parse().unwrap(), "1".parse().unwrap()]
}

/// Compares against `tests/golden/<name>`; `HINDSIGHT_BLESS=1` rewrites it.
pub fn golden(name: &str, actual: &str) {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name);
    if std::env::var_os("HINDSIGHT_BLESS").is_some() {
        std::fs::write(&path, actual).unwrap();
        return;
    }
    let expected = std::fs::read_to_string(&path).unwrap_or_else(|_| panic!("missing golden {}", path.display()));
    assert_eq!(actual, expected, "golden mismatch: {name}");
}
