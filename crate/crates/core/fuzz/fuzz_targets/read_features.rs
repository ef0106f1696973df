#![no_main]

//! Feature tables: no panics on arbitrary bytes, and every accepted table
//! is reproduced exactly by write then read.

use fafscreen_core::io::{read_features, write_features};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(table) = read_features(data) else {
        return;
    };
    let bytes = write_features(&table).expect("accepted table writes");
    let again = read_features(&bytes).expect("written table reads");
    assert_eq!(again, table);
    assert_eq!(write_features(&again).unwrap(), bytes);
});
