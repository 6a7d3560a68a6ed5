#![no_main]

use libfuzzer_sys::fuzz_target;
use logcontrast::fitio::FitRecord;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(record) = FitRecord::from_json(text) else { return };
    let (Ok(fit), Ok(spec)) = (record.to_fit(), record.spec()) else { return };
    assert_eq!(fit.k, spec.k());
    let again = FitRecord::from_json(&record.to_json()).expect("written records parse");
    assert_eq!(again.coefficients.len(), record.coefficients.len());
});
