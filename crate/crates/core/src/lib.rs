//! Sketch-based 3D object retrieval.
//!
//! Objects are rendered from rings of cameras, the renders are turned into
//! sketch-like edge maps, and queries are matched against them with
//! hand-crafted descriptors or a learned common embedding space. The
//! `eval` module scores ranked lists with the usual retrieval metrics.

pub mod descriptors;
pub mod embed;
pub mod error;
pub mod eval;
pub mod geom;
pub mod image;
pub mod mesh;
pub mod pipeline;
pub mod render;
pub mod retrieval;
pub mod seed;
pub mod sketch;
pub mod store;
pub mod synth;

pub use error::{Error, Result};
