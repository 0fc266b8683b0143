use super::{expect_same_shape, missing_cache, Param};
use crate::error::{Error, Result};
use crate::tensor::{gemm, Element, Tensor, Transpose};

/// Fully connected layer `y = x · Wᵀ + b` with `W` stored `[out, in]`.
#[derive(Clone, Debug)]
pub struct Linear<T = f32> {
    pub weight: Param<T>,
    pub bias: Param<T>,
    cache: Option<Tensor<T>>,
}

impl<T: Element> Linear<T> {
    pub fn new(in_features: usize, out_features: usize) -> Self {
        Linear {
            weight: Param::new(Tensor::zeros(&[out_features, in_features])),
            bias: Param::new(Tensor::zeros(&[out_features])),
            cache: None,
        }
    }

    pub fn in_features(&self) -> usize {
        self.weight.value.shape()[1]
    }

    pub fn out_features(&self) -> usize {
        self.weight.value.shape()[0]
    }

    pub fn infer(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        let (n, f) = input.dims2()?;
        if f != self.in_features() {
            return Err(Error::shape(format!(
                "Linear expects {} input features, got {f}",
                self.in_features()
            )));
        }
        let g = self.out_features();
        let mut out = Tensor::zeros(&[n, g]);
        gemm(
            Transpose::No,
            Transpose::Yes,
            n,
            g,
            f,
            input.data(),
            self.weight.value.data(),
            out.data_mut(),
            false,
        );
        out.add_channel_bias(self.bias.value.data())?;
        Ok(out)
    }

    pub fn forward_train(&mut self, input: &Tensor<T>) -> Result<Tensor<T>> {
        let out = self.infer(input)?;
        self.cache = Some(input.clone());
        Ok(out)
    }

    pub fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let input = self.cache.as_ref().ok_or_else(|| missing_cache("Linear"))?;
        let (n, f) = input.dims2()?;
        let g = self.out_features();
        expect_same_shape(&[n, g], grad_out.shape(), "Linear grad_out")?;

        let mut grad_w = Tensor::zeros(&[g, f]);
        gemm(
            Transpose::Yes,
            Transpose::No,
            g,
            f,
            n,
            grad_out.data(),
            input.data(),
            grad_w.data_mut(),
            false,
        );
        let mut grad_b = vec![T::zero(); g];
        for row in grad_out.data().chunks_exact(g) {
            for (b, &v) in grad_b.iter_mut().zip(row) {
                *b += v;
            }
        }
        let mut grad_in = Tensor::zeros(&[n, f]);
        gemm(
            Transpose::No,
            Transpose::No,
            n,
            f,
            g,
            grad_out.data(),
            self.weight.value.data(),
            grad_in.data_mut(),
            false,
        );
        self.weight.set_grad(grad_w)?;
        self.bias.set_grad(Tensor::new(&[g], grad_b)?)?;
        Ok(grad_in)
    }

    pub fn has_cache(&self) -> bool {
        self.cache.is_some()
    }

    pub fn clear_cache(&mut self) {
        self.cache = None;
    }
}

/// `N×C×H×W → N×(C·H·W)`.
#[derive(Clone, Debug, Default)]
pub struct Flatten {
    cache: Option<Vec<usize>>,
}

impl Flatten {
    pub fn infer<T: Element>(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        let n = input.shape()[0];
        input.reshape(&[n, input.len() / n])
    }

    pub fn forward_train<T: Element>(&mut self, input: &Tensor<T>) -> Result<Tensor<T>> {
        self.cache = Some(input.shape().to_vec());
        self.infer(input)
    }

    pub fn backward<T: Element>(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let shape = self.cache.as_ref().ok_or_else(|| missing_cache("Flatten"))?;
        grad_out.reshape(shape)
    }

    pub fn has_cache(&self) -> bool {
        self.cache.is_some()
    }

    pub fn clear_cache(&mut self) {
        self.cache = None;
    }
}
