//! Parametric style model: attribute vectors, procedural bases, SH
//! Lambertian rendering and the trainable style encoder.

pub mod attributes;
pub mod basis;
pub mod encoder;
pub mod render;
pub mod sh;

pub use attributes::{Block, StyleAttributes, STYLE_DIM};
pub use basis::{make_basis, StyleBasis};
pub use encoder::{encode_style, StyleEncoder, STYLE_EMBED_DIM};
pub use render::{rasterize, render, render_detailed, render_with_irradiance, Rasterization, RenderMaps};
