//! HTTP gateway and operator commands for emotion-driven museum visits.

pub mod api;
pub mod config;
pub mod error;
pub mod simulate;

const DAY_MS: i64 = 86_400_000;

/// First millisecond of the next UTC day; the default purge cutoff.
pub fn end_of_utc_day(now_ms: i64) -> i64 {
    (now_ms.div_euclid(DAY_MS) + 1) * DAY_MS
}

#[cfg(test)]
mod tests {
    #[test]
    fn end_of_day() {
        assert_eq!(super::end_of_utc_day(0), 86_400_000);
        assert_eq!(super::end_of_utc_day(86_399_999), 86_400_000);
        assert_eq!(super::end_of_utc_day(86_400_000), 172_800_000);
    }
}
