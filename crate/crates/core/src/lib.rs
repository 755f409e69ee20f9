//! Localization of a rotating wind turbine in LiDAR point clouds and
//! planning of the blade inspection flight around it.
//!
//! The pipeline generates a reference cloud of the turbine (pillar plus the
//! disc swept by the rotor), folds LiDAR scans into a global cloud,
//! downsamples it, rejects the ground plane, clusters what remains, and
//! aligns the reference against each cluster with yaw-constrained ICP. A
//! satisfactory match yields the turbine pose, from which the five-phase
//! inspection trajectory and the blade-passage camera trigger are derived.
//! A synthetic LiDAR scene simulator stands in for field data end to end.

pub mod config;
pub mod error;
pub mod geometry;
pub mod matcher;
pub mod model;
pub mod pipeline;
pub mod ply;
pub mod preprocess;
pub mod sim;
pub mod spatial;
pub mod trajectory;
pub mod trigger;

pub use error::{Error, Result};
pub use geometry::{Point3, PointCloud, Pose4, TurbineParams};
