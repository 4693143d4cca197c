//! Queueing analysis of hybrid RF/VLC links under statistical QoS
//! constraints, with a frame-level simulator for cross-checking.

pub mod bounds;
pub mod channel;
pub mod error;
pub mod numeric;
pub mod qos;
pub mod rates;
pub mod sim;
pub mod source;

pub use error::{Error, Result};
