//! Delay-injected teleoperation simulator.
//!
//! Operator pose streams are forecast with per-axis ARMA models, sent over
//! delayed channels with freshest-packet buffering, tracked by an edge twin
//! and an emulated plant, and scored by weighted trajectory RMSE. A
//! meta-trained PPO agent picks the two prediction horizons online.

pub mod agent;
pub mod base;
pub mod control;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod network;
pub mod operator;
pub mod predictor;

pub use base::{Micros, Pose};
pub use error::{Error, Result};
