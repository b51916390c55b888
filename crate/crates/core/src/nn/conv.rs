use ndarray::{Array1, Array2, Axis};
use rand::Rng;

use super::{init_normal, Scalar};

/// 3x3 convolution, stride 2, zero padding 1, channel-last layout.
///
/// Inputs are `(batch, h * w * c)` rows; outputs `(batch, ho * wo * co)` with
/// `ho = ceil(h / 2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv3x3s2<T: Scalar> {
    pub in_channels: usize,
    pub out_channels: usize,
    /// `(9 * in_channels, out_channels)`, rows ordered `(ky, kx, c)`.
    pub weight: Array2<T>,
    pub bias: Array1<T>,
}

pub struct ConvCache<T: Scalar> {
    cols: Array2<T>,
    batch: usize,
    h: usize,
    w: usize,
}

pub fn conv_out_size(n: usize) -> usize {
    n.div_ceil(2)
}

impl<T: Scalar> Conv3x3s2<T> {
    pub fn new<R: Rng>(in_channels: usize, out_channels: usize, rng: &mut R) -> Self {
        let fan_in = 9 * in_channels;
        let std = (2.0 / fan_in as f64).sqrt();
        Self {
            in_channels,
            out_channels,
            weight: init_normal(fan_in, out_channels, std, rng),
            bias: Array1::zeros(out_channels),
        }
    }

    pub fn zeros(in_channels: usize, out_channels: usize) -> Self {
        Self {
            in_channels,
            out_channels,
            weight: Array2::zeros((9 * in_channels, out_channels)),
            bias: Array1::zeros(out_channels),
        }
    }

    fn im2col(&self, x: &Array2<T>, h: usize, w: usize) -> Array2<T> {
        let c = self.in_channels;
        let (ho, wo) = (conv_out_size(h), conv_out_size(w));
        let batch = x.nrows();
        let mut cols = Array2::zeros((batch * ho * wo, 9 * c));
        for b in 0..batch {
            let src = x.row(b);
            let src = src.as_slice().expect("contiguous input row");
            for oy in 0..ho {
                for ox in 0..wo {
                    let r = (b * ho + oy) * wo + ox;
                    let mut row = cols.row_mut(r);
                    let dst = row.as_slice_mut().expect("contiguous");
                    for ky in 0..3 {
                        let iy = (2 * oy + ky) as isize - 1;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        for kx in 0..3 {
                            let ix = (2 * ox + kx) as isize - 1;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            let s = (iy as usize * w + ix as usize) * c;
                            let d = (ky * 3 + kx) * c;
                            dst[d..d + c].copy_from_slice(&src[s..s + c]);
                        }
                    }
                }
            }
        }
        cols
    }

    pub fn forward(&self, x: &Array2<T>, h: usize, w: usize) -> (Array2<T>, ConvCache<T>) {
        let batch = x.nrows();
        let cols = self.im2col(x, h, w);
        let mut y = cols.dot(&self.weight);
        y += &self.bias;
        let (ho, wo) = (conv_out_size(h), conv_out_size(w));
        let y = y
            .into_shape_with_order((batch, ho * wo * self.out_channels))
            .expect("row-major reshape");
        (y, ConvCache { cols, batch, h, w })
    }

    pub fn backward(&self, cache: &ConvCache<T>, d_out: &Array2<T>, grad: &mut Conv3x3s2<T>, need_input_grad: bool) -> Option<Array2<T>> {
        let (ho, wo) = (conv_out_size(cache.h), conv_out_size(cache.w));
        let d = d_out
            .to_owned()
            .into_shape_with_order((cache.batch * ho * wo, self.out_channels))
            .expect("row-major reshape");
        grad.weight += &cache.cols.t().dot(&d);
        grad.bias += &d.sum_axis(Axis(0));
        if !need_input_grad {
            return None;
        }
        let dcols = d.dot(&self.weight.t());
        let c = self.in_channels;
        let (h, w) = (cache.h, cache.w);
        let mut dx = Array2::zeros((cache.batch, h * w * c));
        for b in 0..cache.batch {
            let mut drow = dx.row_mut(b);
            let dst = drow.as_slice_mut().expect("contiguous");
            for oy in 0..ho {
                for ox in 0..wo {
                    let r = (b * ho + oy) * wo + ox;
                    let src = dcols.row(r);
                    let src = src.as_slice().expect("contiguous");
                    for ky in 0..3 {
                        let iy = (2 * oy + ky) as isize - 1;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        for kx in 0..3 {
                            let ix = (2 * ox + kx) as isize - 1;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            let s = (ky * 3 + kx) * c;
                            let d0 = (iy as usize * w + ix as usize) * c;
                            for k in 0..c {
                                dst[d0 + k] += src[s + k];
                            }
                        }
                    }
                }
            }
        }
        Some(dx)
    }

    pub(crate) fn slices(&self) -> [&[T]; 2] {
        [
            self.weight.as_slice().expect("standard layout"),
            self.bias.as_slice().expect("standard layout"),
        ]
    }

    pub(crate) fn slices_mut(&mut self) -> [&mut [T]; 2] {
        [
            self.weight.as_slice_mut().expect("standard layout"),
            self.bias.as_slice_mut().expect("standard layout"),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    /// Direct (loop) convolution used as an oracle for the im2col path.
    fn direct(conv: &Conv3x3s2<f64>, x: &[f64], h: usize, w: usize) -> Vec<f64> {
        let (c, co) = (conv.in_channels, conv.out_channels);
        let (ho, wo) = (conv_out_size(h), conv_out_size(w));
        let mut out = vec![0.0; ho * wo * co];
        for oy in 0..ho {
            for ox in 0..wo {
                for o in 0..co {
                    let mut acc = conv.bias[o];
                    for ky in 0..3 {
                        for kx in 0..3 {
                            let iy = (2 * oy + ky) as isize - 1;
                            let ix = (2 * ox + kx) as isize - 1;
                            if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                continue;
                            }
                            for k in 0..c {
                                acc += conv.weight[[(ky * 3 + kx) * c + k, o]] * x[(iy as usize * w + ix as usize) * c + k];
                            }
                        }
                    }
                    out[(oy * wo + ox) * co + o] = acc;
                }
            }
        }
        out
    }

    #[test]
    fn im2col_matches_direct_convolution() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let conv = Conv3x3s2::<f64>::new(2, 3, &mut rng);
        let (h, w) = (5, 6);
        let x = init_normal::<f64, _>(2, h * w * 2, 1.0, &mut rng);
        let (y, _) = conv.forward(&x, h, w);
        for b in 0..2 {
            let expect = direct(&conv, x.row(b).as_slice().unwrap(), h, w);
            for (a, e) in y.row(b).iter().zip(&expect) {
                assert!((a - e).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn input_gradient_matches_central_difference() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let conv = Conv3x3s2::<f64>::new(2, 2, &mut rng);
        let (h, w) = (4, 5);
        let x = init_normal::<f64, _>(1, h * w * 2, 1.0, &mut rng);
        let probe = init_normal::<f64, _>(1, conv_out_size(h) * conv_out_size(w) * 2, 1.0, &mut rng);
        let loss = |x: &Array2<f64>| (&conv.forward(x, h, w).0 * &probe).sum();
        let (_, cache) = conv.forward(&x, h, w);
        let mut g = Conv3x3s2::zeros(2, 2);
        let dx = conv.backward(&cache, &probe, &mut g, true).unwrap();
        for i in 0..x.ncols() {
            let mut xp = x.clone();
            xp[[0, i]] += 1e-6;
            let mut xm = x.clone();
            xm[[0, i]] -= 1e-6;
            let fd = (loss(&xp) - loss(&xm)) / 2e-6;
            assert!((fd - dx[[0, i]]).abs() < 1e-7, "{i}: {fd} vs {}", dx[[0, i]]);
        }
    }
}
