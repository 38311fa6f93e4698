//! Wind power simulation from gridded reanalysis wind fields, with optional
//! mean-bias correction, and validation of simulated against observed
//! generation across spatial and temporal aggregation levels.
//!
//! The numeric kernels are generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below pin them to a concrete precision. File-backed pipeline
//! types are `f64` throughout.

pub mod aggregate;
pub mod bias;
pub mod cleaning;
pub mod config;
pub mod error;
pub mod fleet;
pub mod pipeline;
pub mod power;
pub mod reanalysis;
pub mod scalar;
pub mod stats;
pub mod synth;
pub mod time;
pub mod wind_math;

pub use error::{Error, ErrorKind, Result};
pub use scalar::Scalar;

pub type HeightPair64 = wind_math::HeightPair<f64>;
pub type HeightPair32 = wind_math::HeightPair<f32>;
pub type ShearEstimate64 = wind_math::ShearEstimate<f64>;
pub type ShearEstimate32 = wind_math::ShearEstimate<f32>;
pub type PowerCurve64 = power::PowerCurve<f64>;
pub type PowerCurve32 = power::PowerCurve<f32>;
pub type CorrectionFactor64 = bias::CorrectionFactor<f64>;
pub type CorrectionFactor32 = bias::CorrectionFactor<f32>;
pub type ValidationMetrics64 = stats::ValidationMetrics<f64>;
pub type ValidationMetrics32 = stats::ValidationMetrics<f32>;
pub type NotchInterval64 = stats::NotchInterval<f64>;
pub type NotchInterval32 = stats::NotchInterval<f32>;
pub type BoxplotStats64 = stats::BoxplotStats<f64>;
