//! Image ingestion and preparation: decoding, resizing, normalization,
//! augmentation, dataset layouts, splitting and batching.

mod augment;
mod batch;
mod dataset;
mod image;

pub use self::augment::{augment, augment_pixels, hflip, rotate, AugmentPolicy};
pub use self::batch::{batch_iter, Batch, BatchIter, BatchOptions};
pub use self::dataset::{
    load_dataset, ClassCounts, Dataset, ImageSource, Label, Layout, Sample, SampleRef, SourceCategory,
};
pub use self::image::{
    decode_image, load_image, normalize, preprocess, resize_bilinear, RawImage, DEFAULT_IMAGE_SIZE,
};

/// SplitMix64 mixing of a base seed with a sequence of tags, used to give
/// every (epoch, sample) its own independent generator.
pub fn derive_seed(seed: u64, tags: &[u64]) -> u64 {
    let mut z = seed;
    for &t in tags {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_add(t);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
    }
    z
}
