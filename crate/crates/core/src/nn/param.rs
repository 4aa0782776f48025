use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// A named tensor with its gradient accumulator. Buffers (e.g. batch-norm
/// running statistics) are params with `trainable == false`.
#[derive(Debug, Clone, PartialEq)]
pub struct Param<T> {
    pub name: String,
    pub shape: Vec<usize>,
    pub value: Vec<T>,
    pub grad: Vec<T>,
    pub trainable: bool,
}

impl<T: Scalar> Param<T> {
    pub fn new(name: impl Into<String>, shape: &[usize], value: Vec<T>) -> Self {
        let len: usize = shape.iter().product();
        assert_eq!(value.len(), len, "param value length");
        Self {
            name: name.into(),
            shape: shape.to_vec(),
            value,
            grad: vec![T::zero(); len],
            trainable: true,
        }
    }

    pub fn zeros(name: impl Into<String>, shape: &[usize]) -> Self {
        let len = shape.iter().product();
        Self::new(name, shape, vec![T::zero(); len])
    }

    pub fn filled(name: impl Into<String>, shape: &[usize], v: T) -> Self {
        let len = shape.iter().product();
        Self::new(name, shape, vec![v; len])
    }

    /// He-normal initialization with the given fan-in.
    pub fn he_normal<R: Rng + ?Sized>(name: impl Into<String>, shape: &[usize], fan_in: usize, rng: &mut R) -> Self {
        let std = (2.0 / fan_in as f64).sqrt();
        let len = shape.iter().product();
        let value = (0..len)
            .map(|_| {
                let z: f64 = StandardNormal.sample(rng);
                T::lit(z * std)
            })
            .collect();
        Self::new(name, shape, value)
    }

    pub fn buffer(mut self) -> Self {
        self.trainable = false;
        self
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    pub fn zero_grad(&mut self) {
        self.grad.iter_mut().for_each(|g| *g = T::zero());
    }
}

/// Anything that owns parameters. Visiting order is fixed and defines the
/// layout used by optimizers, EMA and checkpoints.
pub trait Module<T: Scalar> {
    fn visit<'a>(&'a self, f: &mut dyn FnMut(&'a Param<T>));
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param<T>));

    fn params(&self) -> Vec<&Param<T>> {
        let mut out = Vec::new();
        self.visit(&mut |p| out.push(p));
        out
    }

    fn zero_grad(&mut self) {
        self.visit_mut(&mut |p| p.zero_grad());
    }

    fn num_params(&self) -> usize {
        let mut n = 0;
        self.visit(&mut |p| {
            if p.trainable {
                n += p.len()
            }
        });
        n
    }
}

impl<T: Scalar, M: Module<T>> Module<T> for Option<M> {
    fn visit<'a>(&'a self, f: &mut dyn FnMut(&'a Param<T>)) {
        if let Some(m) = self {
            m.visit(f);
        }
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param<T>)) {
        if let Some(m) = self {
            m.visit_mut(f);
        }
    }
}

/// Copies values (not gradients) from `src` into `dst`; names are ignored
/// but shapes must match one-to-one.
pub fn copy_values<T: Scalar>(dst: &mut impl Module<T>, src: &impl Module<T>) -> Result<()> {
    let src: Vec<&Param<T>> = src.params();
    let mut i = 0;
    let mut err = None;
    dst.visit_mut(&mut |p| {
        match src.get(i) {
            Some(s) if s.shape == p.shape => p.value.copy_from_slice(&s.value),
            Some(s) => {
                err.get_or_insert_with(|| Error::Shape(format!("{} {:?} vs {} {:?}", p.name, p.shape, s.name, s.shape)));
            }
            None => {
                err.get_or_insert_with(|| Error::Shape(format!("source has no counterpart for {}", p.name)));
            }
        }
        i += 1;
    });
    if let Some(e) = err {
        return Err(e);
    }
    if i != src.len() {
        return Err(Error::Shape(format!("destination has {i} params, source {}", src.len())));
    }
    Ok(())
}
