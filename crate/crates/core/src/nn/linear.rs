use ndarray::linalg::general_mat_mul;
use ndarray::{Array2, ArrayView2, ArrayViewMut2, Axis};
use rand::Rng;

use super::layers::{relu_backward, relu_inplace};
use super::param::{Module, Param};
use crate::scalar::Scalar;

/// Fully connected layer, `y = x W + b` with `W: [in, out]`.
#[derive(Debug, Clone)]
pub struct Linear<T> {
    pub weight: Param<T>,
    pub bias: Param<T>,
}

impl<T: Scalar> Linear<T> {
    pub fn new<R: Rng + ?Sized>(name: &str, input: usize, output: usize, rng: &mut R) -> Self {
        Self {
            weight: Param::he_normal(format!("{name}.weight"), &[input, output], input, rng),
            bias: Param::zeros(format!("{name}.bias"), &[output]),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.shape[0]
    }

    pub fn output_dim(&self) -> usize {
        self.weight.shape[1]
    }

    fn w(&self) -> ArrayView2<'_, T> {
        ArrayView2::from_shape((self.input_dim(), self.output_dim()), &self.weight.value).expect("weight shape")
    }

    pub fn forward(&self, x: &Array2<T>) -> Array2<T> {
        assert_eq!(x.ncols(), self.input_dim(), "linear input width");
        let mut out = Array2::from_shape_fn((x.nrows(), self.output_dim()), |(_, j)| self.bias.value[j]);
        general_mat_mul(T::one(), x, &self.w(), T::one(), &mut out);
        out
    }

    /// `x` is the input seen by `forward`.
    pub fn backward(&mut self, x: &Array2<T>, dy: &Array2<T>, need_dx: bool) -> Option<Array2<T>> {
        let (i, o) = (self.input_dim(), self.output_dim());
        {
            let mut g = ArrayViewMut2::from_shape((i, o), &mut self.weight.grad).expect("grad shape");
            general_mat_mul(T::one(), &x.t(), dy, T::one(), &mut g);
        }
        for (g, s) in self.bias.grad.iter_mut().zip(dy.sum_axis(Axis(0))) {
            *g += s;
        }
        need_dx.then(|| {
            let mut dx = Array2::zeros((dy.nrows(), i));
            general_mat_mul(T::one(), dy, &self.w().t(), T::zero(), &mut dx);
            dx
        })
    }
}

impl<T: Scalar> Module<T> for Linear<T> {
    fn visit<'a>(&'a self, f: &mut dyn FnMut(&'a Param<T>)) {
        f(&self.weight);
        f(&self.bias);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param<T>)) {
        f(&mut self.weight);
        f(&mut self.bias);
    }
}

/// Two-layer perceptron with a ReLU in between.
#[derive(Debug, Clone)]
pub struct Mlp<T> {
    pub fc1: Linear<T>,
    pub fc2: Linear<T>,
}

#[derive(Debug, Clone)]
pub struct MlpCache<T> {
    x: Array2<T>,
    hidden: Array2<T>,
}

impl<T: Scalar> Mlp<T> {
    pub fn new<R: Rng + ?Sized>(name: &str, input: usize, hidden: usize, output: usize, rng: &mut R) -> Self {
        Self {
            fc1: Linear::new(&format!("{name}.fc1"), input, hidden, rng),
            fc2: Linear::new(&format!("{name}.fc2"), hidden, output, rng),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.fc1.input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.fc2.output_dim()
    }

    pub fn forward(&self, x: &Array2<T>) -> (Array2<T>, MlpCache<T>) {
        let mut hidden = self.fc1.forward(x);
        relu_inplace(hidden.as_slice_mut().expect("contiguous"));
        let y = self.fc2.forward(&hidden);
        (y, MlpCache { x: x.clone(), hidden })
    }

    pub fn infer(&self, x: &Array2<T>) -> Array2<T> {
        self.forward(x).0
    }

    pub fn backward(&mut self, cache: &MlpCache<T>, dy: &Array2<T>, need_dx: bool) -> Option<Array2<T>> {
        let mut dh = self.fc2.backward(&cache.hidden, dy, true).expect("dx requested");
        relu_backward(
            dh.as_slice_mut().expect("contiguous"),
            cache.hidden.as_slice().expect("contiguous"),
        );
        self.fc1.backward(&cache.x, &dh, need_dx)
    }
}

impl<T: Scalar> Module<T> for Mlp<T> {
    fn visit<'a>(&'a self, f: &mut dyn FnMut(&'a Param<T>)) {
        self.fc1.visit(f);
        self.fc2.visit(f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param<T>)) {
        self.fc1.visit_mut(f);
        self.fc2.visit_mut(f);
    }
}
