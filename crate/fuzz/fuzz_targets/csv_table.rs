//! CSV reader: no panics, and any table it accepts writes back to a table
//! with the same header and bit-identical values.

#![no_main]

use gravcollapse::table::Table;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(t) = Table::from_csv_bytes(data) {
        let back = Table::from_csv_str(&t.to_csv_string()).expect("own output parses");
        assert_eq!(back.header, t.header);
        assert_eq!(back.rows.len(), t.rows.len());
        for (a, b) in back.rows.iter().zip(&t.rows) {
            for (x, y) in a.iter().zip(b) {
                assert!(x.to_bits() == y.to_bits() || (x.is_nan() && y.is_nan()));
            }
        }
    }
});
