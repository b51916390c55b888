//! Small hand-written network layers with explicit backward passes.
//!
//! Everything is generic over the float type so the same code path runs in
//! `f32` for training and in `f64` for finite-difference gradient checks.

mod adam;
mod conv;
mod dense;

pub use adam::{Adam, AdamConfig};
pub use conv::{conv_out_size, Conv3x3s2, ConvCache};
pub use dense::{Dense, DenseCache};

use std::fmt::Debug;
use std::iter::Sum;
use std::ops::AddAssign;

use ndarray::{Array2, LinalgScalar, ScalarOperand};
use num_traits::Float;

pub trait Scalar:
    LinalgScalar + Float + ScalarOperand + AddAssign + Sum + Debug + Send + Sync + 'static
{
    fn of(x: f64) -> Self;
    fn to_f64(self) -> f64;
}

impl Scalar for f32 {
    #[inline]
    fn of(x: f64) -> Self {
        x as f32
    }
    #[inline]
    fn to_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    #[inline]
    fn of(x: f64) -> Self {
        x
    }
    #[inline]
    fn to_f64(self) -> f64 {
        self
    }
}

#[inline]
pub fn sigmoid<T: Scalar>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

/// SiLU in place; returns the pre-activation for the backward pass.
pub fn silu_forward<T: Scalar>(x: &mut Array2<T>) -> Array2<T> {
    let pre = x.clone();
    x.mapv_inplace(|v| v * sigmoid(v));
    pre
}

pub fn silu_backward<T: Scalar>(pre: &Array2<T>, grad: &mut Array2<T>) {
    ndarray::Zip::from(grad).and(pre).for_each(|g, &x| {
        let s = sigmoid(x);
        *g = *g * s * (T::one() + x * (T::one() - s));
    });
}

/// A collection of parameter tensors visited in a fixed order.
pub trait Parameters {
    type Elem: Scalar;

    fn tensors(&self) -> Vec<&[Self::Elem]>;
    fn tensors_mut(&mut self) -> Vec<&mut [Self::Elem]>;

    fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    fn flatten(&self) -> Vec<Self::Elem> {
        self.tensors().into_iter().flat_map(|t| t.iter().copied()).collect()
    }

    fn load_flat(&mut self, flat: &[Self::Elem]) -> bool {
        if flat.len() != self.parameter_count() {
            return false;
        }
        let mut off = 0;
        for t in self.tensors_mut() {
            let n = t.len();
            t.copy_from_slice(&flat[off..off + n]);
            off += n;
        }
        true
    }

    /// Mutable access to the `index`-th scalar of the flattened parameters.
    fn scalar_mut(&mut self, mut index: usize) -> Option<&mut Self::Elem> {
        for t in self.tensors_mut() {
            if index < t.len() {
                return Some(&mut t[index]);
            }
            index -= t.len();
        }
        None
    }

    fn add_assign_from(&mut self, other: &Self) {
        let src = other.tensors();
        for (d, s) in self.tensors_mut().into_iter().zip(src) {
            for (a, b) in d.iter_mut().zip(s) {
                *a += *b;
            }
        }
    }

    fn fill_zero(&mut self) {
        for t in self.tensors_mut() {
            t.fill(<Self::Elem as num_traits::Zero>::zero());
        }
    }

    fn all_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }
}

/// Glorot-style scaled normal initialisation.
pub(crate) fn init_normal<T: Scalar, R: rand::Rng>(rows: usize, cols: usize, std: f64, rng: &mut R) -> Array2<T> {
    use rand_distr::{Distribution, StandardNormal};
    Array2::from_shape_simple_fn((rows, cols), || {
        let v: f64 = StandardNormal.sample(rng);
        T::of(v * std)
    })
}
