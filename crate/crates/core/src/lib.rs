//! Multi-band temporal activity filtering over block-motion video features.
//!
//! A single cascade of IIR/FIR filters splits motion into stationary noise,
//! long-term isochronal activity (learned per minute of the day), and
//! short-term in-place and moving activity. The short-term bands gate an
//! expensive detector, and the long-term and short-term bands price path
//! segments for activity-aware planning and cost-map export.

pub mod cli;
pub mod config;
pub mod error;
pub mod events;
pub mod isochron;
pub mod motion;
pub mod pgm;
pub mod pipeline;
pub mod plan;
pub mod sim;
pub mod tfilter;

pub use error::{Error, Result};
