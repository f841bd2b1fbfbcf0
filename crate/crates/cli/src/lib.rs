//! Experiment runner and verification suite for `dynregret`.

pub mod config;
pub mod experiment;
pub mod studies;
pub mod verify;
