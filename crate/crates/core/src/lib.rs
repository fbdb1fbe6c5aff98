//! Temporal border / lane-marking line tracking by structured Hough voting.
//!
//! Per-frame weighted Hough voting produces candidate lines for a road
//! border and a lane marking; a small CRF couples them across frames
//! (inter-frame windows, decision-tree mode selection) and to each other
//! (the coupled structure constraint). Inference is online: each frame is
//! solved given the previous frame's selection.
//!
//! Everything numeric is generic over [`Real`] (`f32` or `f64`); the aliases
//! below fix the scalar to `f64`, which is what the CLI uses.

pub mod baselines;
pub mod bench;
pub mod error;
pub mod features;
pub mod formats;
pub mod image;
pub mod inference;
pub mod kalman;
pub mod learning;
pub mod metrics;
pub mod overlay;
pub mod potentials;
pub mod scalar;
pub mod simulation;
pub mod trackers;
pub mod voting;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Line = voting::LineHypothesis<f64>;
pub type Voter = voting::VotingPoint<f64>;
pub type Grid = voting::HypothesisGrid<f64>;
pub type Params = potentials::ModelParams<f64>;
pub type Image = image::GrayImage<f64>;

pub type Line32 = voting::LineHypothesis<f32>;
pub type Voter32 = voting::VotingPoint<f32>;
pub type Grid32 = voting::HypothesisGrid<f32>;
