//! Delayed links, freshest-packet buffering and end-to-end latency
//! bookkeeping.

mod buffer;
mod channel;
mod latency;
mod packet;

pub use buffer::{FreshestBuffer, Offer};
pub use channel::{write_trace, DelayChannel, DelaySpec};
pub use latency::{LatencyMeasurement, EWMA_ALPHA};
pub use packet::{Stage, TimedPacket};
