//! Style encoder: two strided convolutions and a linear projection mapping
//! the 9-channel render maps to a style embedding.

use ndarray::{Array1, Array2, Array3};
use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::{conv_out_size, silu_backward, silu_forward, Conv3x3s2, ConvCache, Dense, DenseCache, Scalar};

pub const STYLE_EMBED_DIM: usize = 512;
pub const MAP_CHANNELS: usize = 9;

#[derive(Debug, Clone, PartialEq)]
pub struct StyleEncoder<T: Scalar> {
    pub height: usize,
    pub width: usize,
    pub conv1: Conv3x3s2<T>,
    pub conv2: Conv3x3s2<T>,
    pub linear: Dense<T>,
}

pub struct EncoderCache<T: Scalar> {
    c1: ConvCache<T>,
    a1: Array2<T>,
    c2: ConvCache<T>,
    a2: Array2<T>,
    lin: DenseCache<T>,
}

impl<T: Scalar> StyleEncoder<T> {
    pub fn new<R: Rng>(height: usize, width: usize, channels: (usize, usize), embed_dim: usize, rng: &mut R) -> Self {
        let flat = conv_out_size(conv_out_size(height)) * conv_out_size(conv_out_size(width)) * channels.1;
        Self {
            height,
            width,
            conv1: Conv3x3s2::new(MAP_CHANNELS, channels.0, rng),
            conv2: Conv3x3s2::new(channels.0, channels.1, rng),
            linear: Dense::new(flat, embed_dim, rng),
        }
    }

    pub fn zeros_like(other: &Self) -> Self {
        Self {
            height: other.height,
            width: other.width,
            conv1: Conv3x3s2::zeros(other.conv1.in_channels, other.conv1.out_channels),
            conv2: Conv3x3s2::zeros(other.conv2.in_channels, other.conv2.out_channels),
            linear: Dense::zeros(other.linear.inputs(), other.linear.outputs()),
        }
    }

    pub fn embed_dim(&self) -> usize {
        self.linear.outputs()
    }

    pub fn input_len(&self) -> usize {
        self.height * self.width * MAP_CHANNELS
    }

    /// `maps` holds one channel-last `(H, W, 9)` map set per row.
    pub fn forward(&self, maps: &Array2<T>) -> (Array2<T>, EncoderCache<T>) {
        let (h, w) = (self.height, self.width);
        let (mut x, c1) = self.conv1.forward(maps, h, w);
        let a1 = silu_forward(&mut x);
        let (h1, w1) = (conv_out_size(h), conv_out_size(w));
        let (mut x, c2) = self.conv2.forward(&x, h1, w1);
        let a2 = silu_forward(&mut x);
        let (y, lin) = self.linear.forward(x);
        (y, EncoderCache { c1, a1, c2, a2, lin })
    }

    pub fn apply(&self, maps: &Array2<T>) -> Array2<T> {
        self.forward(maps).0
    }

    pub fn backward(&self, cache: &EncoderCache<T>, d_out: &Array2<T>, grad: &mut StyleEncoder<T>) {
        let mut d = self.linear.backward(&cache.lin, d_out, &mut grad.linear, true).expect("input grad");
        silu_backward(&cache.a2, &mut d);
        let mut d = self.conv2.backward(&cache.c2, &d, &mut grad.conv2, true).expect("input grad");
        silu_backward(&cache.a1, &mut d);
        self.conv1.backward(&cache.c1, &d, &mut grad.conv1, false);
    }

    pub(crate) fn slices(&self) -> Vec<&[T]> {
        let mut v: Vec<&[T]> = Vec::with_capacity(6);
        v.extend(self.conv1.slices());
        v.extend(self.conv2.slices());
        v.extend(self.linear.slices());
        v
    }

    pub(crate) fn slices_mut(&mut self) -> Vec<&mut [T]> {
        let mut v: Vec<&mut [T]> = Vec::with_capacity(6);
        v.extend(self.conv1.slices_mut());
        v.extend(self.conv2.slices_mut());
        v.extend(self.linear.slices_mut());
        v
    }
}

/// Converts `(9, H, W)` maps to the channel-last row layout the encoder reads.
pub fn maps_to_row<T: Scalar>(maps: &Array3<f32>) -> Array1<T> {
    let (c, h, w) = maps.dim();
    let mut out = Array1::zeros(c * h * w);
    for y in 0..h {
        for x in 0..w {
            for k in 0..c {
                out[(y * w + x) * c + k] = T::of(maps[[k, y, x]] as f64);
            }
        }
    }
    out
}

/// Style embedding of one set of render maps.
pub fn encode_style<T: Scalar>(maps: &Array3<f32>, encoder: &StyleEncoder<T>) -> Result<Array1<T>> {
    let expected = [MAP_CHANNELS, encoder.height, encoder.width];
    if maps.shape() != expected {
        return Err(Error::shape("encode_style", &expected, maps.shape()));
    }
    let row = maps_to_row::<T>(maps).insert_axis(ndarray::Axis(0));
    Ok(encoder.apply(&row).row(0).to_owned())
}
