use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::augment::{augment_pixels, AugmentPolicy};
use super::dataset::{Dataset, Label};
use super::derive_seed;
use super::image::DEFAULT_IMAGE_SIZE;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

const SHUFFLE_TAG: u64 = 1;
const AUGMENT_TAG: u64 = 2;

#[derive(Clone, Debug)]
pub struct BatchOptions {
    pub batch_size: usize,
    pub shuffle: bool,
    pub seed: u64,
    pub epoch: u64,
    /// (height, width) every image is resized to.
    pub image_size: (usize, usize),
    pub augment: Option<AugmentPolicy>,
    /// Fail on undecodable images instead of skipping them.
    pub strict: bool,
}

impl Default for BatchOptions {
    fn default() -> Self {
        BatchOptions {
            batch_size: 32,
            shuffle: false,
            seed: 0,
            epoch: 0,
            image_size: (DEFAULT_IMAGE_SIZE, DEFAULT_IMAGE_SIZE),
            augment: None,
            strict: false,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Batch {
    /// `N × 3 × H × W`
    pub images: Tensor<f32>,
    pub labels: Vec<Label>,
    pub ids: Vec<String>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn label_indices(&self) -> Vec<usize> {
        self.labels.iter().map(|l| l.index()).collect()
    }
}

pub struct BatchIter<'a> {
    dataset: &'a Dataset,
    opts: BatchOptions,
    order: Vec<usize>,
    pos: usize,
    skipped: usize,
}

impl BatchIter<'_> {
    /// Dataset indices in visiting order.
    pub fn order(&self) -> &[usize] {
        &self.order
    }

    /// Samples dropped so far because they failed to decode.
    pub fn skipped(&self) -> usize {
        self.skipped
    }

    fn next_chunk(&mut self) -> Option<&[usize]> {
        if self.pos >= self.order.len() {
            return None;
        }
        let end = (self.pos + self.opts.batch_size).min(self.order.len());
        let chunk = &self.order[self.pos..end];
        self.pos = end;
        Some(chunk)
    }
}

/// Batches over `dataset`. Shuffling and augmentation draw from generators
/// derived from `(seed, epoch)` and `(seed, epoch, sample index)`, so batch
/// contents do not depend on how decoding is scheduled.
pub fn batch_iter(dataset: &Dataset, opts: BatchOptions) -> Result<BatchIter<'_>> {
    if opts.batch_size == 0 {
        return Err(Error::config("batch size must be at least 1"));
    }
    if let Some(p) = &opts.augment {
        p.validate()?;
    }
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    if opts.shuffle {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(opts.seed, &[SHUFFLE_TAG, opts.epoch]));
        order.shuffle(&mut rng);
    }
    Ok(BatchIter {
        dataset,
        opts,
        order,
        pos: 0,
        skipped: 0,
    })
}

impl Iterator for BatchIter<'_> {
    type Item = Result<Batch>;

    fn next(&mut self) -> Option<Result<Batch>> {
        loop {
            let dataset = self.dataset;
            let opts = self.opts.clone();
            let chunk = self.next_chunk()?.to_vec();
            let loaded: Vec<_> = chunk
                .par_iter()
                .map(|&i| {
                    let sample = dataset.samples()[i].load(opts.image_size)?;
                    let pixels = match &opts.augment {
                        Some(policy) if !policy.is_identity() => {
                            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(
                                opts.seed,
                                &[AUGMENT_TAG, opts.epoch, i as u64],
                            ));
                            augment_pixels(&sample.pixels, policy, &mut rng)
                        }
                        _ => sample.pixels,
                    };
                    Ok((sample.id, sample.label, pixels))
                })
                .collect::<Vec<Result<_>>>();

            let mut images = Vec::with_capacity(loaded.len());
            let mut labels = Vec::with_capacity(loaded.len());
            let mut ids = Vec::with_capacity(loaded.len());
            for item in loaded {
                match item {
                    Ok((id, label, pixels)) => {
                        ids.push(id);
                        labels.push(label);
                        images.push(pixels);
                    }
                    Err(e @ Error::Decode { .. }) if !opts.strict => {
                        log::warn!("skipping sample: {e}");
                        self.skipped += 1;
                    }
                    Err(e) => return Some(Err(e)),
                }
            }
            if images.is_empty() {
                continue;
            }
            return Some(Tensor::stack(&images).map(|images| Batch { images, labels, ids }));
        }
    }
}
