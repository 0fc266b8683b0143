use rand::{Rng, RngCore};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::dataset::Sample;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Training-time augmentation. Enabled transforms run in the order
/// rotation, horizontal flip, brightness, noise.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentPolicy {
    pub rotation: bool,
    pub rotation_max_deg: f64,
    pub hflip: bool,
    pub hflip_prob: f64,
    pub brightness: bool,
    pub brightness_range: (f64, f64),
    pub noise: bool,
    pub noise_sigma: f64,
}

impl Default for AugmentPolicy {
    fn default() -> Self {
        AugmentPolicy {
            rotation: true,
            rotation_max_deg: 15.0,
            hflip: true,
            hflip_prob: 0.5,
            brightness: true,
            brightness_range: (0.8, 1.2),
            noise: true,
            noise_sigma: 0.02,
        }
    }
}

impl AugmentPolicy {
    pub fn disabled() -> Self {
        AugmentPolicy {
            rotation: false,
            hflip: false,
            brightness: false,
            noise: false,
            ..Self::default()
        }
    }

    pub fn is_identity(&self) -> bool {
        !(self.rotation || self.hflip || self.brightness || self.noise)
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.brightness_range;
        if !(self.rotation_max_deg.is_finite() && self.rotation_max_deg >= 0.0) {
            return Err(Error::config("rotation_max_deg must be a non-negative number"));
        }
        if !(0.0..=1.0).contains(&self.hflip_prob) {
            return Err(Error::config("hflip_prob must lie in [0, 1]"));
        }
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return Err(Error::config(format!(
                "brightness_range must satisfy 0 < lo <= hi, got ({lo}, {hi})"
            )));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return Err(Error::config("noise_sigma must be non-negative"));
        }
        Ok(())
    }
}

/// Rotates each channel of a `3 × H × W` image about its centre, sampling
/// bilinearly and replicating edge pixels outside the source.
pub fn rotate(pixels: &Tensor<f32>, degrees: f64) -> Tensor<f32> {
    let (c, h, w) = chw(pixels);
    let (sin, cos) = degrees.to_radians().sin_cos();
    let (cy, cx) = ((h as f64 - 1.0) / 2.0, (w as f64 - 1.0) / 2.0);
    let src = pixels.data();
    let mut out = vec![0f32; src.len()];
    for y in 0..h {
        for x in 0..w {
            let (dy, dx) = (y as f64 - cy, x as f64 - cx);
            let sx = (cos * dx + sin * dy + cx).clamp(0.0, (w - 1) as f64);
            let sy = (-sin * dx + cos * dy + cy).clamp(0.0, (h - 1) as f64);
            let (x0, y0) = (sx.floor() as usize, sy.floor() as usize);
            let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(h - 1));
            let (fx, fy) = (sx - x0 as f64, sy - y0 as f64);
            for ch in 0..c {
                let plane = &src[ch * h * w..][..h * w];
                let p = |r: usize, q: usize| plane[r * w + q] as f64;
                let top = p(y0, x0) * (1.0 - fx) + p(y0, x1) * fx;
                let bottom = p(y1, x0) * (1.0 - fx) + p(y1, x1) * fx;
                out[ch * h * w + y * w + x] = (top * (1.0 - fy) + bottom * fy) as f32;
            }
        }
    }
    Tensor::new(pixels.shape(), out).expect("same shape")
}

pub fn hflip(pixels: &Tensor<f32>) -> Tensor<f32> {
    let (_, _, w) = chw(pixels);
    let mut out = pixels.clone();
    for row in out.data_mut().chunks_mut(w) {
        row.reverse();
    }
    out
}

/// Applies `policy` to a `3 × H × W` image in [0, 1]. The result stays in
/// [0, 1] and has the same shape.
pub fn augment_pixels(pixels: &Tensor<f32>, policy: &AugmentPolicy, rng: &mut dyn RngCore) -> Tensor<f32> {
    let mut out = pixels.clone();
    if policy.rotation && policy.rotation_max_deg > 0.0 {
        let m = policy.rotation_max_deg;
        out = rotate(&out, rng.random_range(-m..=m));
    }
    if policy.hflip && rng.random_bool(policy.hflip_prob) {
        out = hflip(&out);
    }
    if policy.brightness {
        let (lo, hi) = policy.brightness_range;
        let factor = if lo < hi { rng.random_range(lo..=hi) } else { lo } as f32;
        out.data_mut()
            .iter_mut()
            .for_each(|v| *v = (*v * factor).clamp(0.0, 1.0));
    }
    if policy.noise && policy.noise_sigma > 0.0 {
        let normal = Normal::new(0.0f32, policy.noise_sigma as f32).expect("validated sigma");
        out.data_mut()
            .iter_mut()
            .for_each(|v| *v = (*v + normal.sample(rng)).clamp(0.0, 1.0));
    }
    out
}

/// Augmented copy of a sample; the label is never touched.
pub fn augment(sample: &Sample, policy: &AugmentPolicy, rng: &mut dyn RngCore) -> Sample {
    Sample {
        pixels: augment_pixels(&sample.pixels, policy, rng),
        ..sample.clone()
    }
}

fn chw(t: &Tensor<f32>) -> (usize, usize, usize) {
    match *t.shape() {
        [c, h, w] => (c, h, w),
        ref s => panic!("expected a C×H×W image, got {s:?}"),
    }
}
