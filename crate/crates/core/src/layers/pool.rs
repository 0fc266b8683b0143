use super::missing_cache;
use crate::error::{Error, Result};
use crate::tensor::{ConvGeometry, Element, Tensor};

/// Max pooling without padding. Ties go to the first element of the window
/// in row-major order; backward routes each gradient to that element only.
#[derive(Clone, Debug)]
pub struct MaxPool2d {
    kernel: usize,
    stride: usize,
    cache: Option<(Vec<usize>, Vec<usize>)>,
}

impl MaxPool2d {
    pub fn new(kernel: usize, stride: usize) -> Self {
        MaxPool2d {
            kernel,
            stride,
            cache: None,
        }
    }

    pub fn kernel(&self) -> usize {
        self.kernel
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    /// Output plus, per output element, the flat input index of its maximum.
    fn pool<T: Element>(&self, input: &Tensor<T>) -> Result<(Tensor<T>, Vec<usize>)> {
        let (n, c, h, w) = input.dims4()?;
        let (ho, wo) = ConvGeometry::square(self.kernel, self.stride, 0)
            .output_dims(h, w)
            .map_err(|e| Error::shape(format!("MaxPool2d: {e}")))?;
        let mut out = Vec::with_capacity(n * c * ho * wo);
        let mut argmax = Vec::with_capacity(n * c * ho * wo);
        let x = input.data();
        for plane in 0..n * c {
            let base = plane * h * w;
            for oi in 0..ho {
                for oj in 0..wo {
                    let mut best_idx = base + oi * self.stride * w + oj * self.stride;
                    let mut best = x[best_idx];
                    for di in 0..self.kernel {
                        for dj in 0..self.kernel {
                            let idx = base + (oi * self.stride + di) * w + oj * self.stride + dj;
                            if x[idx] > best || (x[idx].is_nan() && !best.is_nan()) {
                                best = x[idx];
                                best_idx = idx;
                            }
                        }
                    }
                    out.push(best);
                    argmax.push(best_idx);
                }
            }
        }
        Ok((Tensor::new(&[n, c, ho, wo], out)?, argmax))
    }

    pub fn infer<T: Element>(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(self.pool(input)?.0)
    }

    pub fn forward_train<T: Element>(&mut self, input: &Tensor<T>) -> Result<Tensor<T>> {
        let (out, argmax) = self.pool(input)?;
        self.cache = Some((argmax, input.shape().to_vec()));
        Ok(out)
    }

    pub fn backward<T: Element>(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let (argmax, shape) = self.cache.as_ref().ok_or_else(|| missing_cache("MaxPool2d"))?;
        if grad_out.len() != argmax.len() {
            return Err(Error::shape(format!(
                "MaxPool2d grad_out {:?} does not match cached output size {}",
                grad_out.shape(),
                argmax.len()
            )));
        }
        let mut grad_in = Tensor::zeros(shape);
        let g = grad_in.data_mut();
        for (&idx, &v) in argmax.iter().zip(grad_out.data()) {
            g[idx] += v;
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

/// Half-open input range `[floor(i·size/out), ceil((i+1)·size/out))` averaged
/// into output cell `i`.
pub fn adaptive_region(i: usize, size: usize, out: usize) -> (usize, usize) {
    let start = (i * size) / out;
    let end = ((i + 1) * size).div_ceil(out);
    (start, end)
}

#[derive(Clone, Debug)]
pub struct AdaptiveAvgPool2d {
    output: (usize, usize),
    cache: Option<Vec<usize>>,
}

impl AdaptiveAvgPool2d {
    pub fn new(output: (usize, usize)) -> Self {
        AdaptiveAvgPool2d { output, cache: None }
    }

    pub fn output(&self) -> (usize, usize) {
        self.output
    }

    fn check<T: Element>(&self, input: &Tensor<T>) -> Result<(usize, usize, usize, usize)> {
        let dims = input.dims4()?;
        let (oh, ow) = self.output;
        if dims.2 < oh || dims.3 < ow {
            return Err(Error::shape(format!(
                "AdaptiveAvgPool2d to {oh}x{ow} needs at least that input size, got {:?}",
                input.shape()
            )));
        }
        Ok(dims)
    }

    pub fn infer<T: Element>(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        let (n, c, h, w) = self.check(input)?;
        let (oh, ow) = self.output;
        let x = input.data();
        let mut out = Vec::with_capacity(n * c * oh * ow);
        for plane in x.chunks_exact(h * w) {
            for i in 0..oh {
                let (r0, r1) = adaptive_region(i, h, oh);
                for j in 0..ow {
                    let (c0, c1) = adaptive_region(j, w, ow);
                    let mut sum = T::zero();
                    for r in r0..r1 {
                        for v in &plane[r * w + c0..r * w + c1] {
                            sum += *v;
                        }
                    }
                    out.push(sum / T::from_f64(((r1 - r0) * (c1 - c0)) as f64));
                }
            }
        }
        Tensor::new(&[n, c, oh, ow], out)
    }

    pub fn forward_train<T: Element>(&mut self, input: &Tensor<T>) -> Result<Tensor<T>> {
        let out = self.infer(input)?;
        self.cache = Some(input.shape().to_vec());
        Ok(out)
    }

    pub fn backward<T: Element>(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let shape = self
            .cache
            .as_ref()
            .ok_or_else(|| missing_cache("AdaptiveAvgPool2d"))?;
        let (n, c, h, w) = (shape[0], shape[1], shape[2], shape[3]);
        let (oh, ow) = self.output;
        super::expect_same_shape(&[n, c, oh, ow], grad_out.shape(), "AdaptiveAvgPool2d grad_out")?;
        let mut grad_in = Tensor::zeros(shape);
        let planes = grad_in.data_mut().chunks_exact_mut(h * w);
        for (plane, g) in planes.zip(grad_out.data().chunks_exact(oh * ow)) {
            for i in 0..oh {
                let (r0, r1) = adaptive_region(i, h, oh);
                for j in 0..ow {
                    let (c0, c1) = adaptive_region(j, w, ow);
                    let share = g[i * ow + j] / T::from_f64(((r1 - r0) * (c1 - c0)) as f64);
                    for r in r0..r1 {
                        for v in &mut plane[r * w + c0..r * w + c1] {
                            *v += share;
                        }
                    }
                }
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

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn max_of_single_window() {
        let pool = MaxPool2d::new(2, 2);
        let x = Tensor::new(&[1, 1, 2, 2], vec![1.0f32, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(pool.infer(&x).unwrap().data(), &[4.0]);
        let nan = Tensor::new(&[1, 1, 2, 2], vec![1.0f32, f32::NAN, 3.0, f32::NAN]).unwrap();
        assert!(pool.infer(&nan).unwrap().data()[0].is_nan());
    }

    #[test]
    fn four_by_four_ramp() {
        let pool = MaxPool2d::new(2, 2);
        let x = Tensor::from_fn(&[1, 1, 4, 4], |i| (i + 1) as f32);
        let y = pool.infer(&x).unwrap();
        assert_eq!(y.shape(), &[1, 1, 2, 2]);
        assert_eq!(y.data(), &[6.0, 8.0, 14.0, 16.0]);
    }

    #[test]
    fn constant_input_halves_resolution() {
        let y = MaxPool2d::new(2, 2)
            .infer(&Tensor::full(&[2, 3, 6, 8], 1.5f32))
            .unwrap();
        assert_eq!(y.shape(), &[2, 3, 3, 4]);
        assert!(y.data().iter().all(|&v| v == 1.5));
    }

    #[test]
    fn odd_spatial_size_is_rejected() {
        assert!(MaxPool2d::new(2, 2)
            .infer(&Tensor::<f32>::zeros(&[1, 1, 5, 4]))
            .is_err());
    }

    #[test]
    fn ties_route_gradient_to_first_index() {
        let mut pool = MaxPool2d::new(2, 2);
        let x = Tensor::full(&[1, 1, 2, 2], 3.0f32);
        pool.forward_train(&x).unwrap();
        let g = pool.backward(&Tensor::full(&[1, 1, 1, 1], 1.0)).unwrap();
        assert_eq!(g.data(), &[1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn adaptive_identity_at_matching_size() {
        let pool = AdaptiveAvgPool2d::new((7, 7));
        let x = Tensor::from_fn(&[1, 2, 7, 7], |i| i as f32 * 0.5);
        assert_eq!(pool.infer(&x).unwrap(), x);
    }

    #[test]
    fn adaptive_fourteen_averages_two_by_two_blocks() {
        let pool = AdaptiveAvgPool2d::new((7, 7));
        let x = Tensor::from_fn(&[1, 1, 14, 14], |i| i as f64);
        let y = pool.infer(&x).unwrap();
        for i in 0..7 {
            for j in 0..7 {
                let block = [
                    (2 * i, 2 * j),
                    (2 * i, 2 * j + 1),
                    (2 * i + 1, 2 * j),
                    (2 * i + 1, 2 * j + 1),
                ];
                let mean = block
                    .iter()
                    .map(|&(r, c)| x.get(&[0, 0, r, c]).unwrap())
                    .sum::<f64>()
                    / 4.0;
                assert_eq!(y.get(&[0, 0, i, j]).unwrap(), mean);
            }
        }
    }

    #[test]
    fn adaptive_constant_and_too_small() {
        let pool = AdaptiveAvgPool2d::new((7, 7));
        let y = pool.infer(&Tensor::full(&[1, 1, 10, 9], 2.0f32)).unwrap();
        assert!(y.data().iter().all(|&v| (v - 2.0).abs() < 1e-6));
        assert!(pool.infer(&Tensor::<f32>::zeros(&[1, 1, 6, 7])).is_err());
    }

    #[test]
    fn adaptive_regions_cover_input() {
        assert_eq!(adaptive_region(0, 10, 7), (0, 2));
        assert_eq!(adaptive_region(6, 10, 7), (8, 10));
        assert_eq!(adaptive_region(3, 14, 7), (6, 8));
    }
}
