//! Deterministic desk-scale simulator for multi-camera autonomous exploration.
//!
//! The crate models the full sense-plan-act loop of a camera-rig vehicle
//! exploring an unknown volume:
//!
//! - [`scene`]: ground-truth worlds built from labeled axis-aligned boxes,
//!   with an exact ray-cast oracle and a parametric dry-dock generator.
//! - [`sensor`]: pinhole depth + semantic rendering for a rig of up to five
//!   body-mounted cameras, back-projected into labeled point clouds.
//! - [`mapping`]: sparse voxel map fusing log-odds occupancy with per-voxel
//!   categorical class distributions, plus coverage statistics.
//! - [`planner`]: receding-horizon view planner growing a pose tree and
//!   scoring candidate views by visible unknown volume.
//! - [`harness`]: multi-seed experiment orchestration, coverage curves per
//!   camera count, and the endurance-budgeted design selector.
//!
//! Everything is deterministic given a seed: identical configurations produce
//! bit-identical maps, coverage curves, and chosen poses.

pub mod error;
pub mod geom;
pub mod harness;
pub mod mapping;
pub mod planner;
pub mod reference;
pub mod scene;
pub mod sensor;
pub mod traversal;

pub use error::{Error, Result};
