//! Collision avoidance for elliptical agents in the plane.
//!
//! The library builds on a separation certificate that is cheap enough to sit
//! inside a control loop: a supporting line of one ellipse, parameterized by
//! a single angle, together with the signed distance from that line to the
//! other ellipse. Rotating the line to maximize that distance recovers the
//! exact distance between the ellipses, so the certificate can be kept tight
//! by gradient ascent on one scalar per pair.
//!
//! Modules:
//!
//! * [`geometry`] - closed-form clearance, boundary/deepest points, and the
//!   full clearance gradient;
//! * [`distance`] - independent ground-truth solvers (alternating-projection
//!   closest points, scan + golden-section clearance maximization) used to
//!   cross-check the certificate;
//! * [`qp`] - small dense active-set solver for the minimally invasive
//!   input-filtering program;
//! * [`safety`] - per-pair barrier certificates and the ensemble safety
//!   filter;
//! * [`sim`] - scenario description, nominal controllers, Euler integration,
//!   and run logging.
//!
//! All numerics are generic over [`Real`] (`f32` or `f64`); the `*64`
//! aliases below pin the double-precision variants that the simulator and
//! command-line tools work with.

pub mod distance;
pub mod geometry;
pub mod linalg;
pub mod qp;
pub mod safety;
pub mod scalar;
pub mod sim;

pub use linalg::{Mat2, Vec2};
pub use scalar::{wrap_angle, Real};

/// Double-precision plane vector.
pub type Vec2d = Vec2<f64>;
/// Double-precision 2x2 matrix.
pub type Mat2d = Mat2<f64>;
/// Double-precision ellipse shape.
pub type EllipseShape64 = geometry::EllipseShape<f64>;
/// Double-precision agent pose.
pub type AgentState64 = geometry::AgentState<f64>;
/// Double-precision supporting-line parameter.
pub type SupportLineParam64 = geometry::SupportLineParam<f64>;
/// Double-precision pair certificate.
pub type PairCertificate64 = safety::PairCertificate<f64>;
/// Double-precision scenario description.
pub type ScenarioConfig64 = sim::ScenarioConfig<f64>;
/// Double-precision run log.
pub type SimLog64 = sim::SimLog<f64>;
