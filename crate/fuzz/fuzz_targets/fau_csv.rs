#![no_main]

use emotrail_core::affect::{parse_fau_csv, score, write_fau_csv, ScoringConfig};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(stream) = parse_fau_csv("fuzz", data) else {
        return;
    };
    // Anything accepted must survive a write/parse cycle unchanged.
    let again = parse_fau_csv("fuzz", write_fau_csv(&stream.frames).as_bytes()).unwrap();
    assert_eq!(again, stream);
    let cfg = ScoringConfig {
        min_valid_frames: 1,
        ..ScoringConfig::default()
    };
    if let Ok(s) = score(&stream.frames, &cfg) {
        for v in [s.enjoyment, s.engagement, s.frustration] {
            assert!((0.0..=1.0).contains(&v), "score {v}");
        }
    }
});
