//! Policy compiler, static conflict analyzer and desk-scale router for rule
//! languages whose conditions are probabilistic ML signals.
//!
//! Pipeline: [`dsl::parse`] → [`validator::validate`] →
//! [`conflicts`] / [`engine::Router`] / [`config::compile`].

pub mod boolean;
pub mod config;
pub mod conflicts;
pub mod constructs;
pub mod diagnostic;
pub mod dsl;
pub mod engine;
pub mod geometry;
pub mod signals;
pub mod validator;

pub use diagnostic::{Diagnostic, Severity, Span};
pub use dsl::{equivalent, parse, parse_file, print, Program};

/// Default-precision geometry types.
pub type UnitVector = geometry::UnitVector<f64>;
pub type SphericalCap = geometry::SphericalCap<f64>;
pub type VoronoiGroup = geometry::VoronoiGroup<f64>;

/// Single-precision geometry types.
pub type UnitVectorF32 = geometry::UnitVector<f32>;
pub type SphericalCapF32 = geometry::SphericalCap<f32>;
pub type VoronoiGroupF32 = geometry::VoronoiGroup<f32>;
