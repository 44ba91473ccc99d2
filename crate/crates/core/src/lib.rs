//! Haptic localization of a legged robot against a prior map, using only foot
//! contacts, drifting odometry and leg kinematics.

pub mod experiment;
pub mod filter;
pub mod likelihood;
pub mod maps;
pub mod metrics;
pub mod se3;
pub mod sim;

pub use experiment::{localize, seeded_rngs, CourseScenario, LocalizationRun, ProbeScenario};
pub use filter::{FilterConfig, HapticFilter};
pub use maps::{ElevationMap, PointCloudMap, PriorMap};
pub use se3::Pose;
