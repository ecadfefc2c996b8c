//! Variable-gravity quadruped simulation and training toolkit.
//!
//! The crate is organised by subsystem: rigid-body [`dynamics`], procedural
//! [`terrain`] with penalty contact, drivetrain [`actuation`] power modeling,
//! gravity-scaled [`reward`] terms, the locomotion and base-pose [`env`], a
//! compact [`ppo`] trainer, the constant-force-spring [`rig`] model, and the
//! [`harness`] behind the command-line front end.

pub mod actuation;
pub mod dynamics;
pub mod env;
pub mod error;
pub mod harness;
pub mod ppo;
pub mod reward;
pub mod rig;
pub mod terrain;

pub use error::{Error, Result};
