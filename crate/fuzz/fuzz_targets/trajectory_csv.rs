#![no_main]

use libfuzzer_sys::fuzz_target;
use logcontrast::composition::{assemble_dataset, parse_response_csv, parse_trajectory_csv};
use logcontrast::Domain;

// Input: trajectory CSV, optionally followed by a NUL byte and a response CSV.
fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let (traj, resp) = text.split_once('\0').unwrap_or((text, ""));
    let Ok(table) = parse_trajectory_csv(traj) else { return };
    let Ok(responses) = parse_response_csv(resp) else { return };
    let Ok(domain) = Domain::new(0.0, 1.0) else { return };
    if let Ok(dataset) = assemble_dataset(table, responses, domain) {
        if let Ok(clean) = dataset.preprocess(0.5) {
            assert_eq!(clean.preprocess(0.5).unwrap(), clean);
            clean.log_transform().unwrap();
        }
    }
});
