//! Synthetic RGBD data: procedural textured meshes, UV texture blending,
//! axis-scaling deformation, a z-buffer rasterizer and multi-object scenes
//! written in the dataset layout the evaluation reads.

pub mod dataset;
mod mesh;
mod raster;
mod scene;
mod texture;

pub use mesh::{
    blend_texture_color, deform_mesh, gen_procedural_mesh, scale_mesh, MeshKind, MeshParams, TexturePattern,
    TexturedMesh,
};
pub use raster::{rasterize, FrameBuffer, NEAR_PLANE};
pub use scene::{compose_scene, place_objects, random_rotation, PlacementParams, SceneObject, SceneRender, SceneSpec};
pub use texture::Texture;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("invalid mesh parameters: {0}")]
    InvalidParams(String),
    #[error("invalid scale range {0}")]
    InvalidRange(String),
    #[error("barycentric coordinates {0:?} must be non-negative and sum to 1")]
    InvalidBarycentric([f64; 3]),
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),
    #[error("could not place {0}")]
    Placement(String),
    #[error("i/o error: {0}")]
    Io(String),
}
