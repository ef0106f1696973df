#![no_main]

//! Unlabelled visit rows, in both the 18-feature layouts and the generic
//! `id,<column>,…` layout.

use fafscreen_core::io::{read_feature_rows, read_vectors};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(rows) = read_feature_rows(data) {
        assert!(rows.iter().all(|(_, v)| v.len() == 18 && v.iter().all(|x| x.is_finite())));
    }
    if let Ok(rows) = read_vectors(data) {
        if let Some((_, first)) = rows.first() {
            assert!(rows.iter().all(|(_, v)| v.len() == first.len()));
        }
    }
});
