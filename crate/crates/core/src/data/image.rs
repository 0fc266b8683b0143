use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Side length images are resized to for VGG16.
pub const DEFAULT_IMAGE_SIZE: usize = 224;

/// Decoded 8-bit RGB image, channel-major (`3 × height × width`).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RawImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u8>,
}

impl RawImage {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 || data.len() != 3 * width * height {
            return Err(Error::input(format!(
                "raw image {width}x{height} needs {} bytes, got {}",
                3 * width * height,
                data.len()
            )));
        }
        Ok(RawImage { width, height, data })
    }

    /// Solid colour image.
    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Self {
        let mut data = Vec::with_capacity(3 * width * height);
        for c in rgb {
            data.extend(std::iter::repeat_n(c, width * height));
        }
        RawImage { width, height, data }
    }

    pub fn channel(&self, c: usize) -> &[u8] {
        &self.data[c * self.width * self.height..][..self.width * self.height]
    }

    /// Encode as PNG (used for fixtures and round-trips).
    pub fn to_png(&self) -> Result<Vec<u8>> {
        let (w, h) = (self.width, self.height);
        let mut interleaved = Vec::with_capacity(self.data.len());
        for i in 0..w * h {
            for c in 0..3 {
                interleaved.push(self.data[c * w * h + i]);
            }
        }
        let buf = ::image::RgbImage::from_raw(w as u32, h as u32, interleaved)
            .ok_or_else(|| Error::input("image buffer size mismatch"))?;
        let mut out = std::io::Cursor::new(Vec::new());
        buf.write_to(&mut out, ::image::ImageFormat::Png)
            .map_err(|e| Error::Format(format!("png encoding failed: {e}")))?;
        Ok(out.into_inner())
    }
}

/// Decodes a PNG or JPEG payload to RGB. Grayscale is replicated to all
/// three channels and alpha is dropped.
pub fn decode_image(bytes: &[u8], id: &str) -> Result<RawImage> {
    let decode_err = |reason: String| Error::Decode {
        id: id.to_string(),
        reason,
    };
    let format = ::image::guess_format(bytes).map_err(|e| decode_err(e.to_string()))?;
    if !matches!(format, ::image::ImageFormat::Png | ::image::ImageFormat::Jpeg) {
        return Err(decode_err(format!("unsupported format {format:?}")));
    }
    let img = ::image::load_from_memory_with_format(bytes, format)
        .map_err(|e| decode_err(e.to_string()))?
        .into_rgb8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mut data = vec![0u8; 3 * w * h];
    for (i, px) in img.pixels().enumerate() {
        for c in 0..3 {
            data[c * w * h + i] = px.0[c];
        }
    }
    RawImage::new(w, h, data)
}

pub fn load_image(path: &Path, id: &str) -> Result<RawImage> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_image(&bytes, id)
}

/// Bilinear resize with half-pixel centres: output pixel `i` samples the
/// source at `(i + 0.5)·in/out − 0.5`, clamped to the image. Results are
/// rounded to the nearest integer.
pub fn resize_bilinear(img: &RawImage, out_h: usize, out_w: usize) -> RawImage {
    if (img.height, img.width) == (out_h, out_w) {
        return img.clone();
    }
    let taps = |out: usize, input: usize| -> Vec<(usize, usize, f64)> {
        let scale = input as f64 / out as f64;
        (0..out)
            .map(|i| {
                let src = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, (input - 1) as f64);
                let lo = src.floor() as usize;
                let hi = (lo + 1).min(input - 1);
                (lo, hi, src - lo as f64)
            })
            .collect()
    };
    let rows = taps(out_h, img.height);
    let cols = taps(out_w, img.width);
    let mut data = Vec::with_capacity(3 * out_h * out_w);
    for c in 0..3 {
        let plane = img.channel(c);
        let px = |r: usize, col: usize| plane[r * img.width + col] as f64;
        for &(r0, r1, fy) in &rows {
            for &(c0, c1, fx) in &cols {
                let top = px(r0, c0) * (1.0 - fx) + px(r0, c1) * fx;
                let bottom = px(r1, c0) * (1.0 - fx) + px(r1, c1) * fx;
                let v = top * (1.0 - fy) + bottom * fy;
                data.push(v.round().clamp(0.0, 255.0) as u8);
            }
        }
    }
    RawImage {
        width: out_w,
        height: out_h,
        data,
    }
}

/// `x / 255` into a `3 × H × W` tensor.
pub fn normalize(img: &RawImage) -> Tensor<f32> {
    Tensor::new(
        &[3, img.height, img.width],
        img.data.iter().map(|&v| v as f32 / 255.0).collect(),
    )
    .expect("RawImage dimensions are valid")
}

/// Resize to `size × size`, then normalize.
pub fn preprocess(img: &RawImage, size: (usize, usize)) -> Tensor<f32> {
    normalize(&resize_bilinear(img, size.0, size.1))
}
