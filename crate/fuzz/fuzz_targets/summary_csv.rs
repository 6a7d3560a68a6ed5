#![no_main]

use libfuzzer_sys::fuzz_target;
use logcontrast::simulate::{render_table, ExperimentSummary};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(summary) = ExperimentSummary::from_csv(text) {
        render_table(&summary);
    }
});
