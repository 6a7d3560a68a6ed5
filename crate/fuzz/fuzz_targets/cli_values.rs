#![no_main]

use libfuzzer_sys::fuzz_target;
use logcontrast::args::{parse_domain, parse_k_grid, parse_lambda_path, parse_list};
use logcontrast::simulate::Method;
use logcontrast::tuning::Criterion;
use logcontrast::Variant;

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else { return };
    if let Ok(d) = parse_domain(s) {
        assert!(d.start < d.end);
    }
    if let Ok(ks) = parse_k_grid(s) {
        assert!(!ks.is_empty() && ks.iter().all(|&k| k > 0));
    }
    if let Ok((n, r)) = parse_lambda_path(s) {
        assert!(n > 0 && r > 0.0 && r < 1.0);
    }
    if let Ok(v) = Variant::parse(s) {
        assert_eq!(Variant::parse(&v.to_string()).unwrap(), v);
    }
    let _ = parse_list(s, Method::parse);
    let _ = parse_list(s, Criterion::parse);
});
