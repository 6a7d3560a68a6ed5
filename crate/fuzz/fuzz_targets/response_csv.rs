#![no_main]

use libfuzzer_sys::fuzz_target;
use logcontrast::composition::parse_response_csv;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(table) = parse_response_csv(text) {
        for (_, y, controls) in &table.rows {
            assert!(y.is_finite());
            assert_eq!(controls.len(), table.control_names.len());
        }
    }
});
