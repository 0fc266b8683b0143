//! Lowering of 2-D convolution to matrix multiplication.
//!
//! `im2col` unrolls every receptive field into a column; `col2im` is its
//! adjoint and scatters (sums) columns back into image positions.

use super::{Element, Tensor};
use crate::error::{Error, Result};

/// Kernel, stride and zero-padding of a 2-D window operation, `(h, w)` each.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeometry {
    pub kernel: (usize, usize),
    pub stride: (usize, usize),
    pub pad: (usize, usize),
}

impl ConvGeometry {
    pub fn new(kernel: (usize, usize), stride: (usize, usize), pad: (usize, usize)) -> Self {
        ConvGeometry { kernel, stride, pad }
    }

    /// Square kernel `k`, stride `s`, padding `p`.
    pub fn square(k: usize, s: usize, p: usize) -> Self {
        Self::new((k, k), (s, s), (p, p))
    }

    pub fn patch_len(&self, channels: usize) -> usize {
        channels * self.kernel.0 * self.kernel.1
    }

    /// Output spatial size `(Ho, Wo)` for an `h × w` input.
    ///
    /// Errors unless `(h + 2p - k)` is a non-negative multiple of the stride.
    pub fn output_dims(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        let axis = |size: usize, k: usize, s: usize, p: usize, name: &str| {
            if k == 0 || s == 0 {
                return Err(Error::shape(format!(
                    "{name}: kernel and stride must be positive"
                )));
            }
            let padded = size + 2 * p;
            if padded < k || !(padded - k).is_multiple_of(s) {
                return Err(Error::shape(format!(
                    "{name}: size {size} with kernel {k}, stride {s}, pad {p} \
                     does not give an integral output size"
                )));
            }
            Ok((padded - k) / s + 1)
        };
        Ok((
            axis(h, self.kernel.0, self.stride.0, self.pad.0, "height")?,
            axis(w, self.kernel.1, self.stride.1, self.pad.1, "width")?,
        ))
    }
}

/// Unroll one `c × h × w` image into rows of `out` (row stride `ld`),
/// starting at column `col_off`.
#[allow(clippy::too_many_arguments)]
pub fn im2col_image<T: Element>(
    img: &[T],
    (c, h, w): (usize, usize, usize),
    g: &ConvGeometry,
    (ho, wo): (usize, usize),
    out: &mut [T],
    ld: usize,
    col_off: usize,
) {
    let (kh, kw) = g.kernel;
    let (sh, sw) = g.stride;
    let (ph, pw) = g.pad;
    for ci in 0..c {
        let plane = &img[ci * h * w..][..h * w];
        for di in 0..kh {
            for dj in 0..kw {
                let row = (ci * kh + di) * kw + dj;
                let dst = &mut out[row * ld + col_off..][..ho * wo];
                for oi in 0..ho {
                    let ii = (oi * sh + di) as isize - ph as isize;
                    let dst_row = &mut dst[oi * wo..][..wo];
                    if ii < 0 || ii >= h as isize {
                        dst_row.iter_mut().for_each(|x| *x = T::zero());
                        continue;
                    }
                    let src = &plane[ii as usize * w..][..w];
                    for (oj, slot) in dst_row.iter_mut().enumerate() {
                        let jj = (oj * sw + dj) as isize - pw as isize;
                        *slot = if jj < 0 || jj >= w as isize {
                            T::zero()
                        } else {
                            src[jj as usize]
                        };
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col_image`]: adds every column entry into the image
/// position it was read from. Padding positions are dropped.
#[allow(clippy::too_many_arguments)]
pub fn col2im_image<T: Element>(
    cols: &[T],
    ld: usize,
    col_off: usize,
    (c, h, w): (usize, usize, usize),
    g: &ConvGeometry,
    (ho, wo): (usize, usize),
    img: &mut [T],
) {
    let (kh, kw) = g.kernel;
    let (sh, sw) = g.stride;
    let (ph, pw) = g.pad;
    for ci in 0..c {
        let plane = &mut img[ci * h * w..][..h * w];
        for di in 0..kh {
            for dj in 0..kw {
                let row = (ci * kh + di) * kw + dj;
                let src = &cols[row * ld + col_off..][..ho * wo];
                for oi in 0..ho {
                    let ii = (oi * sh + di) as isize - ph as isize;
                    if ii < 0 || ii >= h as isize {
                        continue;
                    }
                    let dst = &mut plane[ii as usize * w..][..w];
                    for oj in 0..wo {
                        let jj = (oj * sw + dj) as isize - pw as isize;
                        if jj >= 0 && jj < w as isize {
                            dst[jj as usize] += src[oi * wo + oj];
                        }
                    }
                }
            }
        }
    }
}

/// `N×C×H×W` → `(C·kh·kw) × (N·Ho·Wo)`; column `n·Ho·Wo + i·Wo + j` holds the
/// patch feeding output position `(n, i, j)`.
pub fn im2col<T: Element>(input: &Tensor<T>, g: &ConvGeometry) -> Result<Tensor<T>> {
    let (n, c, h, w) = input.dims4()?;
    let (ho, wo) = g.output_dims(h, w)?;
    let rows = g.patch_len(c);
    let cols = n * ho * wo;
    let mut out = Tensor::zeros(&[rows, cols]);
    for (ni, img) in input.data().chunks_exact(c * h * w).enumerate() {
        im2col_image(img, (c, h, w), g, (ho, wo), out.data_mut(), cols, ni * ho * wo);
    }
    Ok(out)
}

/// Adjoint of [`im2col`] for an input of shape `input_shape` (NCHW).
pub fn col2im<T: Element>(cols: &Tensor<T>, input_shape: &[usize], g: &ConvGeometry) -> Result<Tensor<T>> {
    let [n, c, h, w] = *input_shape else {
        return Err(Error::shape(format!(
            "col2im needs an NCHW input shape, got {input_shape:?}"
        )));
    };
    let (ho, wo) = g.output_dims(h, w)?;
    let (rows, ncols) = cols.dims2()?;
    if rows != g.patch_len(c) || ncols != n * ho * wo {
        return Err(Error::shape(format!(
            "col2im: columns {:?} do not match input {input_shape:?}",
            cols.shape()
        )));
    }
    let mut out = Tensor::zeros(input_shape);
    for (ni, img) in out.data_mut().chunks_exact_mut(c * h * w).enumerate() {
        col2im_image(cols.data(), ncols, ni * ho * wo, (c, h, w), g, (ho, wo), img);
    }
    Ok(out)
}
