//! `--at`, `--sweep` and `--tol` argument syntax.

#![no_main]

use compstat::config::{Assignment, SweepAxis, ToleranceSection};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let _ = Assignment::parse(text);
    let _ = ToleranceSection::parse(text);
    if let Ok(axis) = SweepAxis::parse(text) {
        assert!(!axis.values.is_empty());
        assert!(axis.values.iter().all(|v| v.is_finite()));
    }
});
