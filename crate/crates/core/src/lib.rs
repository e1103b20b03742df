//! Tracking control for underactuated multibody systems with unstable
//! internal dynamics: feedforward from a servo-constraint boundary value
//! problem combined with funnel feedback.
//!
//! The worked plant is a planar manipulator with a kinematic loop and a
//! passive spring-mounted last link ([`robot`]).

pub mod cli;
pub mod error;
pub mod funnel;
pub mod internal;
pub mod model;
pub mod numerics;
pub mod robot;
pub mod servo;
pub mod sim;

pub use error::{Error, Result};
pub use model::{validate_model, MbsDims, MbsModel, OperatingSet};
pub use robot::{RobotModel, RobotParams};
