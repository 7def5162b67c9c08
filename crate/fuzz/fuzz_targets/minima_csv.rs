#![no_main]

use libfuzzer_sys::fuzz_target;
use multimin::objectives::{parse_minima_csv, write_minima_csv};

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(rows) = parse_minima_csv(text) {
            let mut out = Vec::new();
            write_minima_csv(&rows, &mut out).expect("parsed rows serialize");
            let again = parse_minima_csv(std::str::from_utf8(&out).unwrap()).expect("round trip parses");
            assert_eq!(again.len(), rows.len());
        }
    }
});
