use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::image::{decode_image, load_image, preprocess, RawImage};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    NoFire = 0,
    Fire = 1,
}

impl Label {
    pub const ALL: [Label; 2] = [Label::NoFire, Label::Fire];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Result<Self> {
        match i {
            0 => Ok(Label::NoFire),
            1 => Ok(Label::Fire),
            _ => Err(Error::input(format!("label index {i} out of range"))),
        }
    }

    /// Machine name, also the binary-layout directory name.
    pub fn name(self) -> &'static str {
        match self {
            Label::NoFire => "no_fire",
            Label::Fire => "fire",
        }
    }

    /// Human-readable name used in reports.
    pub fn display_name(self) -> &'static str {
        match self {
            Label::NoFire => "No Fire",
            Label::Fire => "Fire",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// D-FIRE image category.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceCategory {
    FireOnly,
    SmokeOnly,
    FireAndSmoke,
    None,
}

impl SourceCategory {
    pub const ALL: [SourceCategory; 4] = [
        SourceCategory::FireOnly,
        SourceCategory::SmokeOnly,
        SourceCategory::FireAndSmoke,
        SourceCategory::None,
    ];

    pub fn dir_name(self) -> &'static str {
        match self {
            SourceCategory::FireOnly => "fire_only",
            SourceCategory::SmokeOnly => "smoke_only",
            SourceCategory::FireAndSmoke => "fire_and_smoke",
            SourceCategory::None => "none",
        }
    }

    /// Smoke without visible flame still counts as fire.
    pub fn label(self) -> Label {
        match self {
            SourceCategory::None => Label::NoFire,
            _ => Label::Fire,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layout {
    Binary,
    Dfire4,
}

impl FromStr for Layout {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "binary" => Ok(Layout::Binary),
            "dfire4" => Ok(Layout::Dfire4),
            _ => Err(Error::config(format!(
                "unknown layout '{s}' (expected binary or dfire4)"
            ))),
        }
    }
}

impl fmt::Display for Layout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Layout::Binary => "binary",
            Layout::Dfire4 => "dfire4",
        })
    }
}

#[derive(Clone, Debug)]
pub enum ImageSource {
    File(PathBuf),
    /// Encoded PNG/JPEG bytes.
    Encoded(Arc<Vec<u8>>),
    Raw(Arc<RawImage>),
}

/// Lazily decoded dataset entry.
#[derive(Clone, Debug)]
pub struct SampleRef {
    pub id: String,
    pub label: Label,
    pub category: Option<SourceCategory>,
    pub source: ImageSource,
}

impl SampleRef {
    pub fn new(id: impl Into<String>, label: Label, source: ImageSource) -> Self {
        SampleRef {
            id: id.into(),
            label,
            category: None,
            source,
        }
    }

    pub fn with_category(id: impl Into<String>, category: SourceCategory, source: ImageSource) -> Self {
        SampleRef {
            id: id.into(),
            label: category.label(),
            category: Some(category),
            source,
        }
    }

    pub fn raw(&self) -> Result<RawImage> {
        match &self.source {
            ImageSource::File(path) => load_image(path, &self.id),
            ImageSource::Encoded(bytes) => decode_image(bytes, &self.id),
            ImageSource::Raw(img) => Ok((**img).clone()),
        }
    }

    /// Decode, resize to `size` and normalize.
    pub fn load(&self, size: (usize, usize)) -> Result<Sample> {
        Ok(Sample {
            id: self.id.clone(),
            label: self.label,
            category: self.category,
            pixels: preprocess(&self.raw()?, size),
        })
    }
}

/// Decoded, normalized sample.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub id: String,
    pub label: Label,
    pub category: Option<SourceCategory>,
    pub pixels: Tensor<f32>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub no_fire: usize,
    pub fire: usize,
}

impl ClassCounts {
    pub fn get(&self, label: Label) -> usize {
        match label {
            Label::NoFire => self.no_fire,
            Label::Fire => self.fire,
        }
    }

    pub fn total(&self) -> usize {
        self.no_fire + self.fire
    }
}

/// Id-sorted collection of sample references with unique ids.
#[derive(Clone, Debug, Default)]
pub struct Dataset {
    samples: Vec<SampleRef>,
}

impl Dataset {
    pub fn from_samples(mut samples: Vec<SampleRef>) -> Result<Self> {
        samples.sort_by(|a, b| a.id.cmp(&b.id));
        if let Some(w) = samples.windows(2).find(|w| w[0].id == w[1].id) {
            return Err(Error::Dataset(format!("duplicate sample id '{}'", w[0].id)));
        }
        Ok(Dataset { samples })
    }

    pub fn load(root: &Path, layout: Layout) -> Result<Self> {
        if !root.is_dir() {
            return Err(Error::Dataset(format!(
                "data root {} is not a directory",
                root.display()
            )));
        }
        let mut samples = Vec::new();
        match layout {
            Layout::Binary => {
                for label in [Label::Fire, Label::NoFire] {
                    for (id, path) in scan_class_dir(root, label.name())? {
                        samples.push(SampleRef::new(id, label, ImageSource::File(path)));
                    }
                }
            }
            Layout::Dfire4 => {
                for cat in SourceCategory::ALL {
                    for (id, path) in scan_class_dir(root, cat.dir_name())? {
                        samples.push(SampleRef::with_category(id, cat, ImageSource::File(path)));
                    }
                }
            }
        }
        Self::from_samples(samples)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[SampleRef] {
        &self.samples
    }

    pub fn get(&self, i: usize) -> Option<&SampleRef> {
        self.samples.get(i)
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.samples.iter().map(|s| s.id.as_str())
    }

    pub fn labels(&self) -> Vec<Label> {
        self.samples.iter().map(|s| s.label).collect()
    }

    pub fn counts(&self) -> ClassCounts {
        let fire = self.samples.iter().filter(|s| s.label == Label::Fire).count();
        ClassCounts {
            fire,
            no_fire: self.samples.len() - fire,
        }
    }

    fn subset(&self, mut indices: Vec<usize>) -> Dataset {
        indices.sort_unstable();
        Dataset {
            samples: indices.into_iter().map(|i| self.samples[i].clone()).collect(),
        }
    }

    /// Splits off `test_fraction` of the samples. The test size is
    /// `ceil(len · fraction)`; in stratified mode it is shared among
    /// classes by largest remainder so each split keeps the label ratio.
    pub fn split(&self, test_fraction: f64, seed: u64, stratified: bool) -> Result<(Dataset, Dataset)> {
        if !(test_fraction > 0.0 && test_fraction < 1.0) {
            return Err(Error::input(format!(
                "split fraction must lie in (0, 1), got {test_fraction}"
            )));
        }
        let n = self.len();
        let n_test = split_count(n, test_fraction);
        if n_test == 0 || n_test == n {
            return Err(Error::input(format!(
                "fraction {test_fraction} of {n} samples leaves an empty split"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut test = Vec::with_capacity(n_test);
        if stratified {
            let groups: Vec<Vec<usize>> = Label::ALL
                .iter()
                .map(|&l| (0..n).filter(|&i| self.samples[i].label == l).collect())
                .collect();
            let sizes: Vec<usize> = groups.iter().map(Vec::len).collect();
            let quotas = largest_remainder(&sizes, n_test);
            for (mut group, quota) in groups.into_iter().zip(quotas) {
                group.shuffle(&mut rng);
                test.extend_from_slice(&group[..quota]);
            }
        } else {
            let mut all: Vec<usize> = (0..n).collect();
            all.shuffle(&mut rng);
            test.extend_from_slice(&all[..n_test]);
        }
        let in_test: HashSet<usize> = test.iter().copied().collect();
        let train = (0..n).filter(|i| !in_test.contains(i)).collect();
        Ok((self.subset(train), self.subset(test)))
    }
}

pub fn load_dataset(root: &Path, layout: Layout) -> Result<Dataset> {
    Dataset::load(root, layout)
}

fn split_count(n: usize, fraction: f64) -> usize {
    // slack absorbs products like 0.1·30 = 3.0000000000000004
    ((n as f64 * fraction) - 1e-9).ceil() as usize
}

/// Apportions `total` across groups proportionally to `sizes`, giving the
/// leftover units to the largest fractional parts (earlier group on ties).
fn largest_remainder(sizes: &[usize], total: usize) -> Vec<usize> {
    let n: usize = sizes.iter().sum();
    let mut quotas: Vec<usize> = sizes.iter().map(|&s| s * total / n).collect();
    let mut order: Vec<usize> = (0..sizes.len()).collect();
    order.sort_by_key(|&i| std::cmp::Reverse((sizes[i] * total) % n));
    let mut left = total - quotas.iter().sum::<usize>();
    for i in order {
        if left == 0 {
            break;
        }
        if quotas[i] < sizes[i] {
            quotas[i] += 1;
            left -= 1;
        }
    }
    quotas
}

fn is_image_file(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .map(|e| matches!(e.to_ascii_lowercase().as_str(), "jpg" | "jpeg" | "png"))
        .unwrap_or(false)
}

/// All image files below `root/dir`, as (relative id, path) pairs.
fn scan_class_dir(root: &Path, dir: &str) -> Result<Vec<(String, PathBuf)>> {
    let base = root.join(dir);
    if !base.is_dir() {
        return Err(Error::Dataset(format!(
            "class directory '{dir}' not found under {}",
            root.display()
        )));
    }
    let mut found = Vec::new();
    let mut stack = vec![base];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).map_err(|e| Error::io(&d, e))? {
            let path = entry.map_err(|e| Error::io(&d, e))?.path();
            if path.is_dir() {
                stack.push(path);
            } else if is_image_file(&path) {
                let rel = path.strip_prefix(root).expect("path under root");
                let id = rel
                    .components()
                    .map(|c| c.as_os_str().to_string_lossy())
                    .collect::<Vec<_>>()
                    .join("/");
                found.push((id, path));
            }
        }
    }
    if found.is_empty() {
        return Err(Error::Dataset(format!(
            "class directory '{dir}' contains no images"
        )));
    }
    Ok(found)
}
