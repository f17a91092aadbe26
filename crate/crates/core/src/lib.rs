//! Mixed-reality teleoperation of a legged robot with an arm.
//!
//! The headset side ([`modes`], [`scene`]) turns voice commands, gaze and
//! head pose into messages on a [`bus`]. The robot side ([`robot`]) consumes
//! them. Both share spatial anchors through [`frames`]. [`harness`] runs the
//! two against each other on a deterministic clock.

pub mod bus;
pub mod clock;
pub mod frames;
pub mod geometry;
pub mod modes;
pub mod msgs;
pub mod robot;
pub mod scene;
pub mod harness;
pub mod serve;
