//! Room recognition and thermal calibration pipeline.

pub mod calibrate;
pub mod cli;
pub mod config;
pub mod error;
pub mod plane_fit;
pub mod pointcloud;
pub mod room_extract;
pub mod thermal;

pub use error::{Error, Result};
