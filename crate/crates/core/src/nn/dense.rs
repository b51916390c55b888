use ndarray::{Array1, Array2, Axis};
use rand::Rng;

use super::{init_normal, Scalar};

/// Fully connected layer, `y = x W + b` with `x` of shape `(batch, in)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense<T: Scalar> {
    pub weight: Array2<T>,
    pub bias: Array1<T>,
}

pub struct DenseCache<T: Scalar> {
    input: Array2<T>,
}

impl<T: Scalar> Dense<T> {
    pub fn new<R: Rng>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let std = (2.0 / (inputs + outputs) as f64).sqrt();
        Self {
            weight: init_normal(inputs, outputs, std, rng),
            bias: Array1::zeros(outputs),
        }
    }

    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            weight: Array2::zeros((inputs, outputs)),
            bias: Array1::zeros(outputs),
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.nrows()
    }

    pub fn outputs(&self) -> usize {
        self.weight.ncols()
    }

    pub fn apply(&self, x: &Array2<T>) -> Array2<T> {
        let mut y = x.dot(&self.weight);
        y += &self.bias;
        y
    }

    pub fn forward(&self, x: Array2<T>) -> (Array2<T>, DenseCache<T>) {
        let y = self.apply(&x);
        (y, DenseCache { input: x })
    }

    /// Accumulates parameter gradients into `grad` and returns `dL/dx`.
    pub fn backward(&self, cache: &DenseCache<T>, d_out: &Array2<T>, grad: &mut Dense<T>, need_input_grad: bool) -> Option<Array2<T>> {
        grad.weight += &cache.input.t().dot(d_out);
        grad.bias += &d_out.sum_axis(Axis(0));
        need_input_grad.then(|| d_out.dot(&self.weight.t()))
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
