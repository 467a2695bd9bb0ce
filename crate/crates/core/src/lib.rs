//! Iris presentation attack detection from a pair of differently lit
//! near-infrared images.
//!
//! Surface normals are recovered by photometric stereo; a genuine iris is
//! close to flat, so the spread of its normals is small, while a textured
//! contact lens produces a rougher estimated surface.

pub mod areas;
pub mod eval;
pub mod imageio;
pub mod roi;
pub mod score;
pub mod stats;
pub mod stereo;
pub mod synth;
pub mod pipeline;
