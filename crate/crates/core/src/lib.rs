//! Feed-forward view synthesis for articulated characters.
//!
//! Given sparse posed input images with cameras and a body fit, the model
//! synthesizes target-view images under the same pose (reconstruction) or a
//! new pose (animation). Pose conditioning comes from a learnable triplane
//! texture in canonical body space, rasterized into every view; a decoder-only
//! transformer over patch tokens regresses the target image.
//!
//! Modules follow the pipeline order: `geometry` (cameras, rays),
//! `body` (articulated proxy mesh + skinning), `raster` (z-buffer
//! rasterizer), `texture` (triplane neural texture), `tokenizer`,
//! `backbone` (transformer), `decoder` (linear / DPT heads), `model`
//! (composition), `training`, `datagen`, `evalsuite`, and `gradcheck`
//! (finite-difference verification). `tape` is the reverse-mode autodiff
//! engine everything trains through.

pub mod backbone;
pub mod body;
pub mod datagen;
pub mod decoder;
pub mod evalsuite;
pub mod geometry;
pub mod gradcheck;
pub mod io;
pub mod model;
pub mod raster;
pub mod scalar;
pub mod tape;
pub mod texture;
pub mod tokenizer;
pub mod training;
