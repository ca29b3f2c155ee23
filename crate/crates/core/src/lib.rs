//! Orchestration core for an emotion-driven museum visit: exhibit catalog,
//! visitor session state machine, self-reports, interview selection, facial
//! action unit scoring, souvenir postcards, consent-gated storage and
//! deployment aggregates.

pub mod affect;
pub mod aggregate;
pub mod catalog;
pub mod postcard;
pub mod selection;
pub mod selfreport;
pub mod session;
pub mod store;
mod svg;
