//! Simulation library for dual-arm torque-controlled manipulators:
//! four-channel bilateral teleoperation, observer-based acceleration control,
//! inverse-dynamics identification, motion playback and recurrent-policy
//! imitation learning, all deterministic under a seed.

pub mod bilateral;
pub mod imitation;
pub mod joints;
pub mod mocopy;
pub mod motionlog;
pub mod observers;
pub mod params;
pub mod plant;
pub mod sysid;

mod binio;

pub use joints::{JointVector, JOINT_COUNT};
pub use params::{GravityParams, LumpedGravity, ParamError, RobotParams};
pub use plant::{ContactModel, ModelMismatch, PlantState};

use thiserror::Error;

/// Errors raised while running a simulation loop.
#[derive(Debug, Error)]
pub enum SimError {
    #[error("state became non-finite at tick {tick} ({what})")]
    NonFinite { tick: u64, what: String },
    #[error("invalid parameters: {0}")]
    Params(#[from] ParamError),
    #[error("invalid input: {0}")]
    BadInput(String),
}

/// Control cycle of every simulated loop, 500 Hz.
pub const CONTROL_RATE: f64 = 500.0;

/// Control period in seconds (2 ms).
pub const CONTROL_DT: f64 = 1.0 / CONTROL_RATE;
