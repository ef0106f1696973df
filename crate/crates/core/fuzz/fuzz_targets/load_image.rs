#![no_main]

//! Image decoding must reject malformed PGM/PNG input without panicking,
//! and anything it accepts must survive a PGM and PNG round trip.

use fafscreen_core::image::{load_image, ImageFormat};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(img) = load_image(data, None) else {
        return;
    };
    assert!(img.pixels().iter().all(|&p| p <= img.max_value()));
    assert_eq!(img.pixels().len(), img.width() * img.height());

    for binary in [false, true] {
        let again = load_image(&img.to_pgm(binary), None).expect("own PGM decodes");
        assert_eq!(again.pixels(), img.pixels());
        assert_eq!(again.max_value(), img.max_value());
    }
    if let Ok(png) = img.to_png() {
        let again = load_image(&png, Some(ImageFormat::Png)).expect("own PNG decodes");
        assert_eq!((again.width(), again.height()), (img.width(), img.height()));
    }
});
