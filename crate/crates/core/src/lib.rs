//! Risk-aware pedestrian routing over social-IoT device communities.
//!
//! The pipeline: ingest a road map ([`roadnet`]) and a device registry
//! ([`siot`]), build co-location and friendship graphs, detect communities
//! ([`community`]), turn them into per-edge safety weights ([`riskmap`]),
//! and route with a distance/safety trade-off ([`router`]). [`sim`] repeats
//! the last three steps per time slot as devices move.

pub mod community;
pub mod geo;
pub mod riskmap;
pub mod roadnet;
pub mod router;
pub mod siot;
pub mod sim;

use thiserror::Error;

/// Any failure surfaced by the pipeline.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error(transparent)]
    Geo(#[from] geo::GeoError),
    #[error(transparent)]
    Road(#[from] roadnet::RoadError),
    #[error(transparent)]
    Siot(#[from] siot::SiotError),
    #[error(transparent)]
    Community(#[from] community::CommunityError),
    #[error(transparent)]
    Risk(#[from] riskmap::RiskError),
    #[error(transparent)]
    Route(#[from] router::RouteError),
    #[error("invalid parameter {name}: {message}")]
    InvalidParameter { name: &'static str, message: String },
}

/// Rounds to 6 decimals, the fixed precision of every emitted number.
pub fn round6(v: f64) -> f64 {
    let r = (v * 1e6).round() / 1e6;
    if r == 0.0 {
        0.0
    } else {
        r
    }
}
