use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layers::LayerSpec;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Architecture {
    #[default]
    Vgg16,
    /// Channel- and width-scaled VGG16 with an input-size-dependent adaptive
    /// pool, for small inputs and fast tests.
    VggMini,
}

impl FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vgg16" => Ok(Architecture::Vgg16),
            "vgg-mini" => Ok(Architecture::VggMini),
            other => Err(Error::config(format!(
                "unknown architecture `{other}` (expected vgg16 or vgg-mini)"
            ))),
        }
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Architecture::Vgg16 => "vgg16",
            Architecture::VggMini => "vgg-mini",
        })
    }
}

/// Rational channel multiplier in `(0, 1]`; scaled counts round up.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct WidthMultiplier {
    num: u32,
    den: u32,
}

impl WidthMultiplier {
    pub const ONE: WidthMultiplier = WidthMultiplier { num: 1, den: 1 };

    pub fn new(num: u32, den: u32) -> Result<Self> {
        if num == 0 || den == 0 || num > den {
            return Err(Error::config(format!(
                "width multiplier {num}/{den} must lie in (0, 1]"
            )));
        }
        Ok(WidthMultiplier { num, den })
    }

    pub fn scale(&self, channels: usize) -> usize {
        (channels * self.num as usize).div_ceil(self.den as usize)
    }

    pub fn is_one(&self) -> bool {
        self.num == self.den
    }
}

impl FromStr for WidthMultiplier {
    type Err = Error;

    /// Accepts `a/b` or an integer.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::config(format!("cannot parse width multiplier `{s}` (use a/b)"));
        match s.split_once('/') {
            Some((a, b)) => Self::new(
                a.trim().parse().map_err(|_| bad())?,
                b.trim().parse().map_err(|_| bad())?,
            ),
            None => Self::new(s.trim().parse().map_err(|_| bad())?, 1),
        }
    }
}

impl TryFrom<String> for WidthMultiplier {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<WidthMultiplier> for String {
    fn from(w: WidthMultiplier) -> String {
        w.to_string()
    }
}

impl fmt::Display for WidthMultiplier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.num, self.den)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum InitScheme {
    HeUniform {
        seed: u64,
    },
    /// Load parameters from a `VGGW` file; with `replace_head` a final layer
    /// of the wrong class count is re-initialized instead of rejected.
    InterchangeFile {
        path: Option<PathBuf>,
        replace_head: bool,
        seed: u64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub architecture: Architecture,
    pub num_classes: usize,
    pub input_size: (usize, usize),
    pub dropout_p: f64,
    pub width_multiplier: WidthMultiplier,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig::vgg16(2)
    }
}

/// Part of the network a layer belongs to; names follow `<section>.<index>`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Section {
    Features,
    AvgPool,
    Flatten,
    Classifier,
}

impl Section {
    pub fn name(&self) -> &'static str {
        match self {
            Section::Features => "features",
            Section::AvgPool => "avgpool",
            Section::Flatten => "flatten",
            Section::Classifier => "classifier",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlannedLayer {
    pub section: Section,
    pub index: usize,
    pub spec: LayerSpec,
}

impl PlannedLayer {
    /// `features.0`, `classifier.6`, ...
    pub fn prefix(&self) -> String {
        match self.section {
            Section::AvgPool | Section::Flatten => self.section.name().to_string(),
            _ => format!("{}.{}", self.section.name(), self.index),
        }
    }
}

/// Output channels per conv, `0` marks a 2×2 max pool.
const VGG16_FEATURES: [usize; 18] = [
    64, 64, 0, 128, 128, 0, 256, 256, 256, 0, 512, 512, 512, 0, 512, 512, 512, 0,
];
const VGG16_HIDDEN: usize = 4096;

impl ModelConfig {
    pub fn vgg16(num_classes: usize) -> Self {
        ModelConfig {
            architecture: Architecture::Vgg16,
            num_classes,
            input_size: (224, 224),
            dropout_p: 0.5,
            width_multiplier: WidthMultiplier::ONE,
        }
    }

    pub fn vgg_mini(width: WidthMultiplier, input_size: (usize, usize), num_classes: usize) -> Self {
        ModelConfig {
            architecture: Architecture::VggMini,
            num_classes,
            input_size,
            dropout_p: 0.5,
            width_multiplier: width,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::config(format!(
                "num_classes must be at least 2, got {}",
                self.num_classes
            )));
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return Err(Error::config(format!(
                "dropout_p must be in [0, 1), got {}",
                self.dropout_p
            )));
        }
        let (h, w) = self.input_size;
        match self.architecture {
            Architecture::Vgg16 => {
                if !self.width_multiplier.is_one() || self.input_size != (224, 224) {
                    return Err(Error::config(
                        "vgg16 requires width multiplier 1 and 224x224 input (use vgg-mini otherwise)",
                    ));
                }
            }
            Architecture::VggMini => {
                if h < 32 || w < 32 || h % 32 != 0 || w % 32 != 0 {
                    return Err(Error::config(format!(
                        "vgg-mini input size must be a positive multiple of 32, got {h}x{w}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Output size of the adaptive pool: 7×7 for VGG16, `input/32` for
    /// vgg-mini (so vgg-mini at 224×224 matches VGG16).
    pub fn pool_output(&self) -> (usize, usize) {
        match self.architecture {
            Architecture::Vgg16 => (7, 7),
            Architecture::VggMini => (self.input_size.0 / 32, self.input_size.1 / 32),
        }
    }

    /// Every layer in execution order.
    pub fn layer_plan(&self) -> Result<Vec<PlannedLayer>> {
        self.validate()?;
        let width = self.width_multiplier;
        let mut plan = Vec::new();
        let mut push = |section, index, spec| plan.push(PlannedLayer { section, index, spec });

        let mut index = 0;
        let mut channels = 3;
        for &c in &VGG16_FEATURES {
            if c == 0 {
                push(Section::Features, index, LayerSpec::max_pool_2x2());
                index += 1;
            } else {
                let out = width.scale(c);
                push(Section::Features, index, LayerSpec::conv3x3(channels, out));
                push(Section::Features, index + 1, LayerSpec::ReLU);
                index += 2;
                channels = out;
            }
        }
        let pool = self.pool_output();
        push(Section::AvgPool, 0, LayerSpec::AdaptiveAvgPool2d { output: pool });
        push(Section::Flatten, 0, LayerSpec::Flatten);

        let flat = channels * pool.0 * pool.1;
        let hidden = width.scale(VGG16_HIDDEN);
        let p = self.dropout_p;
        let classifier = [
            LayerSpec::Linear {
                in_features: flat,
                out_features: hidden,
            },
            LayerSpec::ReLU,
            LayerSpec::Dropout { p },
            LayerSpec::Linear {
                in_features: hidden,
                out_features: hidden,
            },
            LayerSpec::ReLU,
            LayerSpec::Dropout { p },
            LayerSpec::Linear {
                in_features: hidden,
                out_features: self.num_classes,
            },
        ];
        for (i, spec) in classifier.into_iter().enumerate() {
            push(Section::Classifier, i, spec);
        }
        Ok(plan)
    }

    /// Trainable parameter count, computed from shapes alone.
    pub fn param_count(&self) -> Result<usize> {
        Ok(self.layer_plan()?.iter().map(|l| l.spec.param_count()).sum())
    }

    pub fn features_param_count(&self) -> Result<usize> {
        Ok(self
            .layer_plan()?
            .iter()
            .filter(|l| l.section == Section::Features)
            .map(|l| l.spec.param_count())
            .sum())
    }
}
