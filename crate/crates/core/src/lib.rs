//! Point-cloud scan matching with closed-form covariance analysis.
//!
//! The crate implements point-to-point and point-to-plane ICP, the linearized
//! least-squares systems both variants induce at a fixed matching, Hessian /
//! observability / covariance reports, cost-landscape evaluation with and
//! without closest-point rematching, curvature-based validity bounds for the
//! fixed-matching quadratic model, and Monte Carlo validation of the
//! closed-form covariances on synthetic scenes.

pub mod covariance;
pub mod error;
pub mod geometry;
pub mod icp;
pub mod io;
pub mod landscape;
pub mod matching;
pub mod montecarlo;
pub mod scenes;

mod kdtree;

pub use error::{Error, Result};
