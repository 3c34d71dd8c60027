//! Wireless-positioning confidence regions as visual-tracker search regions.
//!
//! The pipeline is: RSS measurements from anchors with a log-distance path-loss
//! model ([`wireless`]) → least-squares position estimate ([`estimator`]) →
//! Fisher information and the elliptical confidence region ([`region`]) →
//! pinhole projection into each camera ([`camera`]) → per-frame search regions
//! ([`gate`]). [`sim`] runs Monte Carlo studies over a [`scene::Scene`] and
//! [`eval`] scores tracker output against ground truth.

pub mod camera;
pub mod error;
pub mod estimator;
pub mod eval;
pub mod gate;
pub mod region;
pub mod scene;
pub mod sim;
pub mod wireless;

pub use error::{Error, Result};
