#![no_main]

use emotrail_core::catalog::Catalog;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(catalog) = Catalog::load(data) {
        for entry in catalog.entries() {
            assert!(catalog.painting_for_emotion(&entry.emotion.id).is_ok());
        }
    }
});
