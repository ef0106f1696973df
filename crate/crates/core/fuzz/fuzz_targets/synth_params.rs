#![no_main]

//! Generator parameter files: parsing and validation never panic, and
//! validated parameters produce a consistent disease assignment.

use fafscreen_core::synth::SynthParams;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(params) = serde_json::from_slice::<SynthParams>(data) else {
        return;
    };
    if params.validate().is_err() {
        return;
    }
    assert_eq!(params.disease_assignment().len(), params.n_diseased);
    let text = serde_json::to_vec(&params).expect("params serialize");
    assert_eq!(serde_json::from_slice::<SynthParams>(&text).unwrap(), params);
});
