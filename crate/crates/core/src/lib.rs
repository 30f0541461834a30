//! Traffic-role analysis of clickstream data.
//!
//! The pipeline turns a clickstream transition dump into per-article
//! traffic counts ([`ingest`]), derives searchshare and resistance and the
//! four traffic-role groups ([`metrics`]), compares pageview rankings
//! ([`overlap`]), and relates the roles to link-network ([`linkgraph`]),
//! content/edit and topic ([`topics`]) features ([`features`]) before
//! predicting them with gradient-boosted trees ([`model`]).

pub mod error;
pub mod features;
pub mod ingest;
pub mod io;
pub mod linkgraph;
pub mod metrics;
pub mod model;
pub mod overlap;
pub mod stats;
pub mod topics;

pub use error::{Error, Result};
