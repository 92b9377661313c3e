//! Two-stream vector-graphics recognition: a hypergraph vector stream and
//! a latent-space rasterized point-cloud stream, merged in residual blocks.

pub mod gradkit;
pub mod harness;
pub mod hypergraph;
pub mod lsr;
pub mod net;
pub mod scalar;
pub mod vgdoc;

pub use scalar::{Point, Scalar, Vec3};

/// Single-precision geometry.
pub type Point32 = Point<f32>;
/// Double-precision geometry, the precision the network runs in.
pub type Point64 = Point<f64>;
pub type Document32 = vgdoc::VgDocument<f32>;
pub type Document64 = vgdoc::VgDocument<f64>;
