//! JSON report decoding.

#![no_main]

use compstat::report::{AnalyzeReport, VerifyReport};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(r) = AnalyzeReport::from_json(text) {
        for rep in &r.reports {
            for c in &rep.csms {
                let _ = c.matrix.to_matrix();
            }
        }
    }
    let _ = VerifyReport::from_json(text);
});
