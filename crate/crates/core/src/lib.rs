//! Desk-scale toolkit for translating LiDAR scans of dynamic scenes into
//! their static-scene counterparts.
//!
//! The pipeline: a 2.5-D simulator emits paired static/dynamic runs
//! ([`sim`]), scans are paired by pose proximity ([`pairing`]), an
//! adversarial autoencoder learns the dynamic-to-static mapping ([`model`]
//! on top of [`nn`]), and reconstructions plus downstream trajectories are
//! scored ([`metrics`], [`traj`]). [`scan`] holds the shared sensor-frame
//! types and the range-image codec everything else speaks.

pub mod fsutil;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod pairing;
pub mod rngutil;
pub mod scan;
pub mod sim;
pub mod svg;
pub mod sweep;
pub mod traj;

pub use scan::{Label, Point3, PointCloud, Pose, RangeImage, SegMask, SensorSpec};
