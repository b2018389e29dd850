//! Simulation and estimation stack for small teams of camera-equipped
//! underwater robots.
//!
//! * [`optics`]: Tenengrad depth-from-focus ranging and its calibration.
//! * [`camera`]: pinhole projection and single-camera localization.
//! * [`protocol`]: the distributed consensus localization update.
//! * [`dynamics`]: rigid-body model driven by four vertical thrusters.
//! * [`control`]: pressure-array sensing, PI attitude/depth control and
//!   thrust allocation.
//! * [`sim`]: scenarios that couple all of the above in synchronous rounds.

pub mod camera;
pub mod control;
pub mod dynamics;
pub mod exec;
pub mod optics;
pub mod protocol;
pub mod sim;

pub use nalgebra::{Matrix3, Vector3};
