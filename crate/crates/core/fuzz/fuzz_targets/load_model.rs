#![no_main]

//! Model files: malformed JSON or inconsistent parameters are errors, and
//! an accepted model round-trips with bit-identical decisions.

use fafscreen_core::svm::SvmModel;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(model) = SvmModel::from_json_bytes(data) else {
        return;
    };
    let bytes = model.to_json_bytes().expect("accepted model writes");
    let again = SvmModel::from_json_bytes(&bytes).expect("written model reads");
    assert_eq!(again, model);

    let probe = vec![0.5; model.dim()];
    let f = model.decision_value(&probe).expect("probe has model dimension");
    let g = again.decision_value(&probe).unwrap();
    assert_eq!(f.to_bits(), g.to_bits());
    assert!(model.decision_value(&vec![0.0; model.dim() + 1]).is_err());
});
