#![no_main]

use emotrail_core::catalog::Catalog;
use emotrail_core::selfreport::ReportSubmission;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(sub) = serde_json::from_slice::<ReportSubmission>(data) else {
        return;
    };
    if let Ok(report) = sub.into_report(1, 0, &Catalog::bundled()) {
        assert!(report.sliders.validate().is_ok());
    }
});
