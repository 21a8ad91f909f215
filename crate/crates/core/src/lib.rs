//! Sensor-precision and privacy-noise design for linear-Gaussian tracking.
//!
//! The crate computes the smallest steady-state covariance a Kalman tracker
//! can reach, designs the cheapest detection precision that keeps the
//! steady-state covariance under a target, designs the cheapest injected
//! noise that keeps the next prediction above a privacy floor, and checks the
//! results in a Monte Carlo tracking study.
//!
//! All numeric code is generic over [`Real`] (`f32` or `f64`). The aliases
//! at the crate root fix the scalar to `f64`; the `*32` aliases fix it to `f32`.
//!
//! ```
//! use covdesign::{theoretical_bound, Mat, SymMat, SystemModel};
//!
//! let f = Mat::from_rows(&[vec![1.0, 1.0], vec![0.0, 1.0]]).unwrap();
//! let h = Mat::from_rows(&[vec![1.0, 0.0]]).unwrap();
//! let model = SystemModel::new(f, h, SymMat::from_diag(&[0.1, 1.0])).unwrap();
//! let bound = theoretical_bound(&model).unwrap();
//! assert!(bound[(0, 0)] > 0.0);
//! ```

pub mod cli;
pub mod design;
pub mod error;
pub mod kalman;
pub mod matlib;
pub mod riccati;
pub mod scalar;
pub mod sdp;
pub mod sim;

pub use design::{
    design_privacy, design_utility, privacy_floor_from_position, theoretical_bound, utility_target_from_position,
};
pub use error::{Error, Result};
pub use riccati::{solve_dare, solve_dare_noiseless, solve_dare_precision, DareOptions};
pub use scalar::Real;
pub use sdp::{SdpOptions, SdpStatus};

pub type Mat = matlib::Mat<f64>;
pub type SymMat = matlib::SymMat<f64>;
pub type SystemModel = riccati::SystemModel<f64>;
pub type InitialBelief = kalman::InitialBelief<f64>;
pub type FilterState = kalman::FilterState<f64>;
pub type SdpProblem = sdp::SdpProblem<f64>;
pub type SdpSolution = sdp::SdpSolution<f64>;
pub type UtilitySpec = design::UtilitySpec<f64>;
pub type UtilityDesign = design::UtilityDesign<f64>;
pub type PrivacySpec = design::PrivacySpec<f64>;
pub type PrivacyDesign = design::PrivacyDesign<f64>;
pub type PixelModel = sim::PixelModel<f64>;
pub type Homography = sim::Homography<f64>;
pub type McReport = sim::McReport<f64>;

pub type Mat32 = matlib::Mat<f32>;
pub type SymMat32 = matlib::SymMat<f32>;
pub type SystemModel32 = riccati::SystemModel<f32>;
pub type InitialBelief32 = kalman::InitialBelief<f32>;
pub type SdpProblem32 = sdp::SdpProblem<f32>;
pub type UtilitySpec32 = design::UtilitySpec<f32>;
pub type PrivacySpec32 = design::PrivacySpec<f32>;
