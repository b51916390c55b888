use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SHAPE_DIM: usize = 100;
pub const EXPRESSION_DIM: usize = 50;
pub const POSE_DIM: usize = 9;
pub const TEXTURE_DIM: usize = 50;
pub const ILLUMINATION_DIM: usize = 27;
pub const STYLE_DIM: usize = SHAPE_DIM + EXPRESSION_DIM + POSE_DIM + TEXTURE_DIM + ILLUMINATION_DIM;

/// Number of real spherical-harmonic terms (bands 0..=2).
pub const SH_TERMS: usize = 9;

/// The five attribute blocks, in concatenation order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Block {
    Shape,
    Expression,
    Pose,
    Texture,
    Illumination,
}

impl Block {
    pub const ALL: [Block; 5] = [Block::Shape, Block::Expression, Block::Pose, Block::Texture, Block::Illumination];

    pub fn range(self) -> std::ops::Range<usize> {
        let (start, len) = match self {
            Block::Shape => (0, SHAPE_DIM),
            Block::Expression => (SHAPE_DIM, EXPRESSION_DIM),
            Block::Pose => (SHAPE_DIM + EXPRESSION_DIM, POSE_DIM),
            Block::Texture => (SHAPE_DIM + EXPRESSION_DIM + POSE_DIM, TEXTURE_DIM),
            Block::Illumination => (STYLE_DIM - ILLUMINATION_DIM, ILLUMINATION_DIM),
        };
        start..start + len
    }

    pub fn name(self) -> &'static str {
        match self {
            Block::Shape => "shape",
            Block::Expression => "expression",
            Block::Pose => "pose",
            Block::Texture => "texture",
            Block::Illumination => "illumination",
        }
    }
}

/// Partitioned style vector: shape, expression, pose, texture, illumination.
///
/// Pose layout: `[yaw, pitch, roll, log_scale, tx, ty, reserved x3]`.
/// Illumination layout: 9 SH coefficients, each as an RGB triple
/// (`illumination[3 * k + channel]`).
#[derive(Debug, Clone, PartialEq)]
pub struct StyleAttributes {
    values: Vec<f64>,
}

impl StyleAttributes {
    pub fn zeros() -> Self {
        Self { values: vec![0.0; STYLE_DIM] }
    }

    pub fn from_vec(values: Vec<f64>) -> Result<Self> {
        if values.len() != STYLE_DIM {
            return Err(Error::shape("style attributes", &[STYLE_DIM], &[values.len()]));
        }
        Ok(Self { values })
    }

    pub fn from_slice(values: &[f64]) -> Result<Self> {
        Self::from_vec(values.to_vec())
    }

    pub fn from_blocks(shape: &[f64], expression: &[f64], pose: &[f64], texture: &[f64], illumination: &[f64]) -> Result<Self> {
        let mut values = Vec::with_capacity(STYLE_DIM);
        for (block, part) in Block::ALL.iter().zip([shape, expression, pose, texture, illumination]) {
            if part.len() != block.range().len() {
                return Err(Error::shape(block.name(), &[block.range().len()], &[part.len()]));
            }
            values.extend_from_slice(part);
        }
        Ok(Self { values })
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }

    pub fn block(&self, block: Block) -> &[f64] {
        &self.values[block.range()]
    }

    pub fn block_mut(&mut self, block: Block) -> &mut [f64] {
        &mut self.values[block.range()]
    }

    pub fn shape(&self) -> &[f64] {
        self.block(Block::Shape)
    }
    pub fn expression(&self) -> &[f64] {
        self.block(Block::Expression)
    }
    pub fn pose(&self) -> &[f64] {
        self.block(Block::Pose)
    }
    pub fn texture(&self) -> &[f64] {
        self.block(Block::Texture)
    }
    pub fn illumination(&self) -> &[f64] {
        self.block(Block::Illumination)
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn sh_coefficient(&self, term: usize, channel: usize) -> f64 {
        self.illumination()[3 * term + channel]
    }
}
