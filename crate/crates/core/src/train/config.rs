use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{AugmentPolicy, Layout};
use crate::error::{Error, Result};
use crate::model::{Architecture, ModelConfig, WidthMultiplier};
use crate::optim::AdamConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub root: Option<PathBuf>,
    pub layout: Layout,
    pub test_fraction: f64,
    pub val_fraction: f64,
    pub stratified: bool,
    /// Abort on undecodable images instead of skipping them.
    pub strict: bool,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            root: None,
            layout: Layout::Binary,
            test_fraction: 0.2,
            val_fraction: 0.0,
            stratified: true,
            strict: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
    pub freeze_features: bool,
    /// Apply the `[augment]` policy to training batches.
    pub augment: bool,
    /// Per-epoch checkpoints retained on disk; 0 keeps all.
    pub keep_checkpoints: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 10,
            batch_size: 32,
            lr: 1e-4,
            seed: 0,
            freeze_features: false,
            augment: true,
            keep_checkpoints: 2,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    /// Where checkpoints, history and reports go; nothing is written if unset.
    pub dir: Option<PathBuf>,
    /// Starting weights (`.vggw`); He-uniform initialization otherwise.
    pub weights: Option<PathBuf>,
    pub replace_head: bool,
}

/// Complete description of a run. Loaded from a TOML file with one table
/// per concern (`[data]`, `[model]`, `[train]`, `[augment]`, `[output]`).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub augment: AugmentPolicy,
    pub output: OutputConfig,
}

/// Command-line values that take precedence over the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub data_root: Option<PathBuf>,
    pub layout: Option<Layout>,
    pub arch: Option<Architecture>,
    pub width: Option<WidthMultiplier>,
    pub input_size: Option<usize>,
    pub num_classes: Option<usize>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub lr: Option<f64>,
    pub seed: Option<u64>,
    pub test_fraction: Option<f64>,
    pub val_fraction: Option<f64>,
    pub weights: Option<PathBuf>,
    pub freeze_features: bool,
    pub replace_head: bool,
    pub no_augment: bool,
    pub strict: bool,
    pub out: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::config(format!("invalid run configuration: {e}")))
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run configuration serializes")
    }

    /// Defaults, then the optional file, then `overrides`.
    pub fn resolve(file: Option<&Path>, overrides: &Overrides) -> Result<Self> {
        let mut cfg = match file {
            Some(p) => Self::from_file(p)?,
            None => Self::default(),
        };
        cfg.apply(overrides);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(arch) = o.arch {
            if arch != self.model.architecture {
                let n = self.model.num_classes;
                self.model = match arch {
                    Architecture::Vgg16 => ModelConfig::vgg16(n),
                    Architecture::VggMini => ModelConfig::vgg_mini(self.model.width_multiplier, (32, 32), n),
                };
            }
        }
        if let Some(w) = o.width {
            self.model.width_multiplier = w;
        }
        if let Some(s) = o.input_size {
            self.model.input_size = (s, s);
        }
        if let Some(n) = o.num_classes {
            self.model.num_classes = n;
        }
        set(&mut self.data.root, o.data_root.clone().map(Some));
        set(&mut self.data.layout, o.layout);
        set(&mut self.data.test_fraction, o.test_fraction);
        set(&mut self.data.val_fraction, o.val_fraction);
        set(&mut self.train.epochs, o.epochs);
        set(&mut self.train.batch_size, o.batch_size);
        set(&mut self.train.lr, o.lr);
        set(&mut self.train.seed, o.seed);
        set(&mut self.output.weights, o.weights.clone().map(Some));
        set(&mut self.output.dir, o.out.clone().map(Some));
        self.train.freeze_features |= o.freeze_features;
        self.output.replace_head |= o.replace_head;
        self.data.strict |= o.strict;
        if o.no_augment {
            self.train.augment = false;
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.augment.validate()?;
        self.adam().validate()?;
        let t = &self.train;
        if t.epochs == 0 {
            return Err(Error::config("epochs must be at least 1"));
        }
        if t.batch_size == 0 {
            return Err(Error::config("batch_size must be at least 1"));
        }
        let d = &self.data;
        for (name, f) in [
            ("test_fraction", d.test_fraction),
            ("val_fraction", d.val_fraction),
        ] {
            if !(0.0..1.0).contains(&f) {
                return Err(Error::config(format!("{name} must lie in [0, 1), got {f}")));
            }
        }
        if d.test_fraction + d.val_fraction >= 1.0 {
            return Err(Error::config("test_fraction + val_fraction must be below 1"));
        }
        if self.output.replace_head && self.output.weights.is_none() {
            return Err(Error::config("replace_head needs starting weights"));
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.train.lr,
            ..AdamConfig::default()
        }
    }

    pub fn augment_policy(&self) -> Option<AugmentPolicy> {
        (self.train.augment && !self.augment.is_identity()).then(|| self.augment.clone())
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}
