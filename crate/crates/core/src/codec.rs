//! Fixed latent codec: average pooling down, nearest-neighbour upsampling
//! back. Latents are centred and scaled so the data is roughly unit
//! variance for the diffusion process.

use ndarray::{Array3, ArrayView3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatentCodec {
    pub factor: usize,
    pub scale: f32,
}

impl Default for LatentCodec {
    fn default() -> Self {
        Self { factor: 4, scale: 4.0 }
    }
}

impl LatentCodec {
    pub fn latent_shape(&self, channels: usize, height: usize, width: usize) -> [usize; 3] {
        [channels, height / self.factor, width / self.factor]
    }

    pub fn encode(&self, image: ArrayView3<f32>) -> Result<Array3<f32>> {
        let (_, h, w) = image.dim();
        if self.factor == 0 || h % self.factor != 0 || w % self.factor != 0 {
            return Err(Error::InvalidParameter(format!(
                "image {h}x{w} not divisible by pooling factor {}",
                self.factor
            )));
        }
        let mut z = average_pool(image, self.factor);
        z.mapv_inplace(|v| self.scale * (v - 0.5));
        Ok(z)
    }

    pub fn decode(&self, z: ArrayView3<f32>) -> Array3<f32> {
        let (c, h, w) = z.dim();
        let f = self.factor;
        Array3::from_shape_fn((c, h * f, w * f), |(k, y, x)| (z[[k, y / f, x / f]] / self.scale + 0.5).clamp(0.0, 1.0))
    }
}

/// Mean over non-overlapping `factor x factor` patches.
pub fn average_pool(image: ArrayView3<f32>, factor: usize) -> Array3<f32> {
    let (c, h, w) = image.dim();
    let (ph, pw) = (h / factor, w / factor);
    let norm = 1.0 / (factor * factor) as f32;
    let mut out = Array3::zeros((c, ph, pw));
    for k in 0..c {
        for y in 0..ph * factor {
            for x in 0..pw * factor {
                out[[k, y / factor, x / factor]] += image[[k, y, x]];
            }
        }
    }
    out *= norm;
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decode_inverts_encode_on_patch_constant_images() {
        let codec = LatentCodec::default();
        let img = Array3::from_shape_fn((3, 16, 16), |(c, y, x)| ((c + y / 4 * 3 + x / 4) % 7) as f32 / 7.0);
        let z = codec.encode(img.view()).unwrap();
        assert_eq!(z.dim(), (3, 4, 4));
        let back = codec.decode(z.view());
        for (a, b) in back.iter().zip(img.iter()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn mid_grey_maps_to_zero_latent() {
        let codec = LatentCodec::default();
        let z = codec.encode(Array3::from_elem((3, 8, 8), 0.5).view()).unwrap();
        assert!(z.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn indivisible_sizes_are_rejected() {
        assert!(LatentCodec::default().encode(Array3::zeros((3, 10, 8)).view()).is_err());
    }
}
