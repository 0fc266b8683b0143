use rand::{Rng, RngCore};

use super::{expect_same_shape, missing_cache};
use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

/// `max(0, x)`, with NaN passed through. Backward passes gradient where the
/// cached input was strictly positive.
#[derive(Clone, Debug, Default)]
pub struct Relu<T = f32> {
    cache: Option<Tensor<T>>,
}

impl<T: Element> Relu<T> {
    pub fn infer(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(input.map(|x| if x > T::zero() || x.is_nan() { x } else { T::zero() }))
    }

    pub fn forward_train(&mut self, input: &Tensor<T>) -> Result<Tensor<T>> {
        self.cache = Some(input.clone());
        self.infer(input)
    }

    pub fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let input = self.cache.as_ref().ok_or_else(|| missing_cache("ReLU"))?;
        input.zip_map(grad_out, |x, g| if x > T::zero() { g } else { T::zero() })
    }

    pub fn has_cache(&self) -> bool {
        self.cache.is_some()
    }

    pub fn clear_cache(&mut self) {
        self.cache = None;
    }
}

/// Inverted dropout: in train mode each element is zeroed with probability
/// `p` and survivors are scaled by `1/(1-p)`; eval mode is the identity.
#[derive(Clone, Debug)]
pub struct Dropout<T = f32> {
    p: f64,
    mask: Option<Tensor<T>>,
}

impl<T: Element> Dropout<T> {
    pub fn new(p: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::config(format!(
                "Dropout probability must be in [0, 1), got {p}"
            )));
        }
        Ok(Dropout { p, mask: None })
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn infer(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(input.clone())
    }

    pub fn forward_train(&mut self, input: &Tensor<T>, rng: &mut dyn RngCore) -> Result<Tensor<T>> {
        let mask = if self.p == 0.0 {
            Tensor::full(input.shape(), T::one())
        } else {
            let keep = T::from_f64(1.0 / (1.0 - self.p));
            Tensor::from_fn(input.shape(), |_| {
                if rng.random::<f64>() < self.p {
                    T::zero()
                } else {
                    keep
                }
            })
        };
        let out = input.mul(&mask)?;
        self.mask = Some(mask);
        Ok(out)
    }

    /// Mask of the last train-mode forward: 0 or `1/(1-p)` per element.
    pub fn mask(&self) -> Option<&Tensor<T>> {
        self.mask.as_ref()
    }

    pub fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let mask = self.mask.as_ref().ok_or_else(|| missing_cache("Dropout"))?;
        mask.mul(grad_out)
    }

    pub fn has_cache(&self) -> bool {
        self.mask.is_some()
    }

    pub fn clear_cache(&mut self) {
        self.mask = None;
    }
}

/// Row-wise softmax of an `N×K` tensor, with the row maximum subtracted
/// before exponentiation.
pub fn softmax_rows<T: Element>(logits: &Tensor<T>) -> Result<Tensor<T>> {
    let (_, k) = logits.dims2()?;
    let mut out = logits.clone();
    for row in out.data_mut().chunks_exact_mut(k) {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let mut total = T::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        row.iter_mut().for_each(|v| *v /= total);
    }
    Ok(out)
}

#[derive(Clone, Debug, Default)]
pub struct Softmax<T = f32> {
    cache: Option<Tensor<T>>,
}

impl<T: Element> Softmax<T> {
    pub fn infer(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        softmax_rows(input)
    }

    pub fn forward_train(&mut self, input: &Tensor<T>) -> Result<Tensor<T>> {
        let out = softmax_rows(input)?;
        self.cache = Some(out.clone());
        Ok(out)
    }

    /// `dx = y ⊙ (g - Σ g·y)` per row.
    pub fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let y = self.cache.as_ref().ok_or_else(|| missing_cache("Softmax"))?;
        expect_same_shape(y.shape(), grad_out.shape(), "Softmax grad_out")?;
        let (_, k) = y.dims2()?;
        let mut grad_in = grad_out.clone();
        for (gi, yr) in grad_in
            .data_mut()
            .chunks_exact_mut(k)
            .zip(y.data().chunks_exact(k))
        {
            let inner: T = gi.iter().zip(yr).map(|(&g, &p)| g * p).sum();
            for (g, &p) in gi.iter_mut().zip(yr) {
                *g = p * (*g - inner);
            }
        }
        Ok(grad_in)
    }

    pub fn has_cache(&self) -> bool {
        self.cache.is_some()
    }

    pub fn clear_cache(&mut self) {
        self.cache = None;
    }
}
