#![no_main]

//! Cohort manifests: accepted rows carry valid grids and survive a round
//! trip unchanged.

use fafscreen_core::io::{read_manifest, write_manifest};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(rows) = read_manifest(data) else {
        return;
    };
    for row in &rows {
        row.grid.validate().expect("manifest grids are validated");
    }
    let bytes = write_manifest(&rows).expect("accepted manifest writes");
    assert_eq!(read_manifest(&bytes).expect("written manifest reads"), rows);
});
