#![no_main]

use emotrail_core::aggregate::{
    emotion_map_panels, parse_dataset, render_emotion_map, summary_stats, MapStyle, OutcomeCounts,
};
use emotrail_core::catalog::Catalog;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(dataset) = parse_dataset(data) else {
        return;
    };
    let catalog = Catalog::bundled();
    let _ = summary_stats(&dataset, OutcomeCounts::default(), &catalog);
    let _ = render_emotion_map(&emotion_map_panels(&dataset, &catalog), &MapStyle::default());
});
