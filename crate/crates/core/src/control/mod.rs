//! Edge twin (RMP acceleration with capping, command smoothing, render
//! snapshots) and the emulated plant (per-axis PID at 1 kHz).
//!
//! Controlled coordinates are the seven pose axes themselves.

mod pid;
mod rmp;
mod smoother;
mod synth;

pub use pid::{pid_step, plant_step, PidGains, PlantState};
pub use rmp::{cap, integrate, render_tick, rmp_accel, step_sim, AxisState, FrameState, RmpParams, TwinState};
pub use smoother::SmootherState;
pub use synth::ControlSynthesizer;
