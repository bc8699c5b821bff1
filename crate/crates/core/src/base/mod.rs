//! Domain primitives shared by every pipeline stage: poses, the device-to-robot
//! workspace map, min-max normalization, the scheduler clock and seed
//! derivation.

mod clock;
mod normalize;
mod pose;
mod seed;
mod workspace;

pub use clock::{ClockMode, Micros, VirtualClock};
pub use normalize::{minmax_normalize, NormalizationBounds};
pub use pose::{normalize_quaternion, Pose, MIN_QUATERNION_NORM};
pub use seed::derive_seed;
pub use workspace::{map_workspace, WorkspaceMap};

/// Number of pose components (3 position + 4 quaternion).
pub const POSE_DIM: usize = 7;
