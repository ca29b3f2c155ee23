#![no_main]

use emotrail_core::session::replay;
use emotrail_core::store::EventRecord;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let events: Vec<_> = text
        .lines()
        .filter_map(|l| EventRecord::parse_line(l).ok())
        .filter_map(|r| r.to_event().ok())
        .collect();
    if let Ok(session) = replay(&events) {
        let _ = session.phase();
    }
});
