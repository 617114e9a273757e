//! Hybrid zero dynamics control of a five-link 3D biped with point masses.
//!
//! The robot walks on flat ground with a single point foot in contact. One
//! step is a continuous single-support phase followed by an instantaneous
//! rigid impact and a relabelling of the legs.

pub mod ad;
pub mod config;
pub mod constraints;
pub mod controller;
pub mod diagnostics;
pub mod error;
pub mod gait;
pub mod impact;
pub mod kinematics;
pub mod model;
pub mod ode;
pub mod optimizer;
pub mod params;
pub mod published;
pub mod simulator;
pub mod stability;
pub mod state;

pub use error::{Error, Result};
pub use gait::GaitDesign;
pub use params::RobotParams;
pub use state::{RobotState, StanceLeg};
