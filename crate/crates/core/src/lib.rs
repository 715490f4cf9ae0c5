//! Gaussian splatting on the CPU with LiDAR geometry supervision.
//!
//! Each Gaussian carries a confidence score that learns whether it sits on
//! LiDAR-observed structure. The scores drive two things: a geometric loss
//! that pulls confident Gaussians onto the LiDAR cloud, and the weights of
//! an ICP step that, alternated with photometric pose refinement, localizes
//! a camera and scan against a trained map.
//!
//! - [`render`]: tile-based forward rasterizer and its analytic backward pass.
//! - [`losses`]: photometric, geometric, confidence and scale terms.
//! - [`train`]: map initialization from LiDAR, Adam, densification.
//! - [`localize`]: weighted Kabsch/ICP, render-based pose refinement.
//! - [`metrics`]: chamfer distance, F-scores, PSNR/SSIM reports.
//! - [`synth`]: a procedural street scene with cameras and LiDAR.
//! - [`io`]: PLY, poses, PNG, checkpoints, TOML configuration.

pub mod cli;
pub mod error;
pub mod geometry;
pub mod imaging;
pub mod io;
pub mod localize;
pub mod losses;
pub mod render;
pub mod metrics;
pub mod spatial;
pub mod synth;
pub mod train;

pub use error::{Error, Result};
