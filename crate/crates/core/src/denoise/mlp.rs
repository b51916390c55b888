//! Dense noise estimator with SiLU hidden layers and sinusoidal timestep
//! features.

use ndarray::{Array1, Array2};
use rand::Rng;

use crate::nn::{silu_backward, silu_forward, Dense, DenseCache, Parameters, Scalar};

pub const TIME_EMBED_DIM: usize = 64;

/// `[sin(t f_0), cos(t f_0), sin(t f_1), ...]` with geometric frequencies.
pub fn time_embedding<T: Scalar>(t: usize, dim: usize) -> Array1<T> {
    let half = dim / 2;
    let mut out = Array1::zeros(dim);
    for i in 0..half {
        let freq = (-(10_000f64.ln()) * i as f64 / half as f64).exp();
        let a = t as f64 * freq;
        out[2 * i] = T::of(a.sin());
        out[2 * i + 1] = T::of(a.cos());
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp<T: Scalar> {
    pub layers: Vec<Dense<T>>,
}

pub struct MlpCache<T: Scalar> {
    dense: Vec<DenseCache<T>>,
    pre: Vec<Array2<T>>,
}

impl<T: Scalar> Mlp<T> {
    /// `widths` lists input, hidden and output sizes.
    pub fn new<R: Rng>(widths: &[usize], rng: &mut R) -> Self {
        assert!(widths.len() >= 2, "an MLP needs at least input and output widths");
        let layers = widths.windows(2).map(|w| Dense::new(w[0], w[1], rng)).collect();
        Self { layers }
    }

    pub fn zeros(widths: &[usize]) -> Self {
        assert!(widths.len() >= 2, "an MLP needs at least input and output widths");
        Self {
            layers: widths.windows(2).map(|w| Dense::zeros(w[0], w[1])).collect(),
        }
    }

    pub fn zeros_like(other: &Self) -> Self {
        Self::zeros(&other.widths())
    }

    pub fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.layers[0].inputs()];
        w.extend(self.layers.iter().map(|l| l.outputs()));
        w
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("nonempty").outputs()
    }

    pub fn forward(&self, x: Array2<T>) -> (Array2<T>, MlpCache<T>) {
        let last = self.layers.len() - 1;
        let mut dense = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(last);
        let mut h = x;
        for (i, layer) in self.layers.iter().enumerate() {
            let (mut y, cache) = layer.forward(h);
            dense.push(cache);
            if i < last {
                pre.push(silu_forward(&mut y));
            }
            h = y;
        }
        (h, MlpCache { dense, pre })
    }

    pub fn apply(&self, x: &Array2<T>) -> Array2<T> {
        let mut y = self.layers[0].apply(x);
        self.finish_from_first(&mut y);
        y
    }

    /// Completes a forward pass given the first layer's pre-activation.
    pub fn finish_from_first(&self, first_pre: &mut Array2<T>) {
        let mut h = std::mem::replace(first_pre, Array2::zeros((0, 0)));
        for layer in &self.layers[1..] {
            h.mapv_inplace(|v| v * crate::nn::sigmoid(v));
            h = layer.apply(&h);
        }
        *first_pre = h;
    }

    /// Accumulates parameter gradients and optionally returns `dL/dx`.
    pub fn backward(&self, cache: &MlpCache<T>, d_out: &Array2<T>, grad: &mut Mlp<T>, need_input_grad: bool) -> Option<Array2<T>> {
        let mut d = d_out.clone();
        for i in (0..self.layers.len()).rev() {
            let want = i > 0 || need_input_grad;
            let dx = self.layers[i].backward(&cache.dense[i], &d, &mut grad.layers[i], want);
            if i == 0 {
                return dx;
            }
            d = dx.expect("requested");
            silu_backward(&cache.pre[i - 1], &mut d);
        }
        None
    }

    pub(crate) fn slices(&self) -> Vec<&[T]> {
        self.layers.iter().flat_map(|l| l.slices()).collect()
    }

    pub(crate) fn slices_mut(&mut self) -> Vec<&mut [T]> {
        self.layers.iter_mut().flat_map(|l| l.slices_mut()).collect()
    }
}

impl<T: Scalar> Parameters for Mlp<T> {
    type Elem = T;

    fn tensors(&self) -> Vec<&[T]> {
        self.slices()
    }

    fn tensors_mut(&mut self) -> Vec<&mut [T]> {
        self.slices_mut()
    }
}
