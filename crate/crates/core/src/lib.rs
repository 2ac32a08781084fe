//! Gaze-aware rear risk assessment for reverse parking.
//!
//! Exterior pedestrian detections and interior driver-gaze events are joined
//! through a layered, time-indexed store ([`ldm::Ldm`]); each pedestrian is
//! placed in a zone behind the vehicle ([`geometry`]) and given a risk level
//! that escalates when the driver is not looking at the mirror covering it
//! ([`risk`]). [`simulator`] and [`eval`] generate labeled data and score the
//! pipeline against it.

pub mod config;
pub mod eval;
pub mod geometry;
pub mod ingest;
pub mod ldm;
pub mod pipeline;
pub mod risk;
pub mod simulator;

pub use config::Config;
pub use ldm::Ldm;

/// Strip trailing blanks from every line of a rendered table.
pub(crate) fn trim_lines(text: &str) -> String {
    text.lines().map(|l| l.trim_end().to_string() + "\n").collect()
}
