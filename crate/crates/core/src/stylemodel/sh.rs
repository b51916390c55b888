//! Real spherical harmonics (bands 0..=2) and Lambertian irradiance.

use std::f64::consts::PI;

use super::attributes::SH_TERMS;

/// Lambertian convolution constants per band.
const A0: f64 = PI;
const A1: f64 = 2.0 * PI / 3.0;
const A2: f64 = PI / 4.0;

/// Normalisation of `Y_00`.
pub const Y00: f64 = 0.282_094_791_773_878_14;

/// The nine real SH basis functions evaluated at unit normal `n`, each
/// pre-multiplied by its band's Lambertian constant.
#[inline]
pub fn irradiance_basis(n: [f64; 3]) -> [f64; SH_TERMS] {
    let [x, y, z] = n;
    [
        A0 * Y00,
        A1 * 0.488_602_511_902_919_9 * y,
        A1 * 0.488_602_511_902_919_9 * z,
        A1 * 0.488_602_511_902_919_9 * x,
        A2 * 1.092_548_430_592_079_2 * x * y,
        A2 * 1.092_548_430_592_079_2 * y * z,
        A2 * 0.315_391_565_252_520_05 * (3.0 * z * z - 1.0),
        A2 * 1.092_548_430_592_079_2 * x * z,
        A2 * 0.546_274_215_296_039_6 * (x * x - y * y),
    ]
}

/// Irradiance per colour channel for SH lighting `coeffs[3 * k + c]`.
#[inline]
pub fn irradiance(n: [f64; 3], coeffs: &[f64]) -> [f64; 3] {
    let basis = irradiance_basis(n);
    let mut out = [0.0; 3];
    for (k, b) in basis.iter().enumerate() {
        for (c, o) in out.iter_mut().enumerate() {
            *o += b * coeffs[3 * k + c];
        }
    }
    out
}
