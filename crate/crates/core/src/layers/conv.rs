use super::{missing_cache, Param};
use crate::error::{Error, Result};
use crate::tensor::{col2im_image, gemm, im2col_image, ConvGeometry, Element, Tensor, Transpose};

/// 2-D convolution lowered to im2col + GEMM, one image at a time.
///
/// Weight is `[out, in, kh, kw]`, bias `[out]`. Backward recomputes the
/// patch matrix from the cached input instead of storing it.
#[derive(Clone, Debug)]
pub struct Conv2d<T = f32> {
    in_channels: usize,
    out_channels: usize,
    geometry: ConvGeometry,
    pub weight: Param<T>,
    pub bias: Param<T>,
    cache: Option<Tensor<T>>,
}

impl<T: Element> Conv2d<T> {
    pub fn new(in_channels: usize, out_channels: usize, geometry: ConvGeometry) -> Self {
        let (kh, kw) = geometry.kernel;
        Conv2d {
            in_channels,
            out_channels,
            geometry,
            weight: Param::new(Tensor::zeros(&[out_channels, in_channels, kh, kw])),
            bias: Param::new(Tensor::zeros(&[out_channels])),
            cache: None,
        }
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn out_channels(&self) -> usize {
        self.out_channels
    }

    pub fn geometry(&self) -> ConvGeometry {
        self.geometry
    }

    fn out_dims(&self, input: &Tensor<T>) -> Result<(usize, usize, usize, usize, usize)> {
        let (n, c, h, w) = input.dims4()?;
        if c != self.in_channels {
            return Err(Error::shape(format!(
                "Conv2d expects {} input channels, got {c} (input {:?})",
                self.in_channels,
                input.shape()
            )));
        }
        let (ho, wo) = self.geometry.output_dims(h, w)?;
        Ok((n, h, w, ho, wo))
    }

    pub fn infer(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        let (n, h, w, ho, wo) = self.out_dims(input)?;
        let (cin, cout) = (self.in_channels, self.out_channels);
        let patch = self.geometry.patch_len(cin);
        let spatial = ho * wo;
        let mut cols = vec![T::zero(); patch * spatial];
        let mut out = Tensor::zeros(&[n, cout, ho, wo]);
        let images = input.data().chunks_exact(cin * h * w);
        for (img, dst) in images.zip(out.data_mut().chunks_exact_mut(cout * spatial)) {
            im2col_image(img, (cin, h, w), &self.geometry, (ho, wo), &mut cols, spatial, 0);
            gemm(
                Transpose::No,
                Transpose::No,
                cout,
                spatial,
                patch,
                self.weight.value.data(),
                &cols,
                dst,
                false,
            );
        }
        out.add_channel_bias(self.bias.value.data())?;
        Ok(out)
    }

    pub fn forward_train(&mut self, input: &Tensor<T>) -> Result<Tensor<T>> {
        let out = self.infer(input)?;
        self.cache = Some(input.clone());
        Ok(out)
    }

    pub fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let input = self.cache.as_ref().ok_or_else(|| missing_cache("Conv2d"))?;
        let (n, h, w, ho, wo) = self.out_dims(input)?;
        let (cin, cout) = (self.in_channels, self.out_channels);
        super::expect_same_shape(&[n, cout, ho, wo], grad_out.shape(), "Conv2d grad_out")?;
        let patch = self.geometry.patch_len(cin);
        let spatial = ho * wo;

        let mut cols = vec![T::zero(); patch * spatial];
        let mut dcols = vec![T::zero(); patch * spatial];
        let mut grad_w = Tensor::zeros(self.weight.value.shape());
        let mut grad_b = vec![T::zero(); cout];
        let mut grad_in = Tensor::zeros(input.shape());

        let images = input.data().chunks_exact(cin * h * w);
        let grads = grad_out.data().chunks_exact(cout * spatial);
        let grad_imgs = grad_in.data_mut().chunks_exact_mut(cin * h * w);
        for ((img, g), gin) in images.zip(grads).zip(grad_imgs) {
            im2col_image(img, (cin, h, w), &self.geometry, (ho, wo), &mut cols, spatial, 0);
            // dW += dY · colsᵀ
            gemm(
                Transpose::No,
                Transpose::Yes,
                cout,
                patch,
                spatial,
                g,
                &cols,
                grad_w.data_mut(),
                true,
            );
            // dcols = Wᵀ · dY
            gemm(
                Transpose::Yes,
                Transpose::No,
                patch,
                spatial,
                cout,
                self.weight.value.data(),
                g,
                &mut dcols,
                false,
            );
            col2im_image(&dcols, spatial, 0, (cin, h, w), &self.geometry, (ho, wo), gin);
            for (gb, row) in grad_b.iter_mut().zip(g.chunks_exact(spatial)) {
                *gb += row.iter().copied().sum::<T>();
            }
        }
        self.weight.set_grad(grad_w)?;
        self.bias.set_grad(Tensor::new(&[cout], grad_b)?)?;
        Ok(grad_in)
    }

    pub fn has_cache(&self) -> bool {
        self.cache.is_some()
    }

    pub fn clear_cache(&mut self) {
        self.cache = None;
    }
}
