//! Whole-body bilateral teleoperation of a redundant floating-base
//! manipulator.
//!
//! The crate is organized bottom-up:
//!
//! - [`geometry`]: SE(3)/SO(3) math and quaternion error signals.
//! - [`robot`]: floating-base model, kinematics, dynamics and the master device.
//! - [`wbc`]: hierarchical whole-body controller with the null-space projection.
//! - [`channel`]: delayed, jittery, lossy sample streams.
//! - [`tdpa`]: energy ledgers, passivity observers and controllers.
//! - [`teleop`]: the switching bilateral architecture tying everything together.

pub mod channel;
pub mod error;
pub mod geometry;
pub mod robot;
pub mod tdpa;
pub mod teleop;
pub mod wbc;

pub use error::{ChannelError, ControlError, DynamicsError, GeometryError, ModelError, TeleopError};
pub use geometry::{Pose, Rotation, Twist, TwistFrame, UnitQuaternion, Wrench};
pub use robot::{Frame, MasterDevice, RobotModel, RobotState};
