//! Spiking neural networks for event-based tactile data that recur over
//! both time and taxel location.

pub mod energy;
pub mod error;
pub mod event_data;
pub mod inference;
pub mod kv;
pub mod layers;
pub mod model;
pub mod neurons;
pub mod topology;
pub mod training;

pub use error::{Error, Result};
