//! The VGG16 network (and its width-scaled `vgg-mini` sibling), weight
//! initialization, and the `VGGW` checkpoint format.

mod checkpoint;
mod config;

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::layers::{Layer, LayerSpec, Mode, Param};
use crate::tensor::{Element, Tensor};

pub use checkpoint::{
    load_checkpoint, read_vggw, save_checkpoint, write_vggw, LoadOptions, VggwReader, VGGW_MAGIC,
    VGGW_VERSION,
};
pub use config::{Architecture, InitScheme, ModelConfig, PlannedLayer, Section, WidthMultiplier};

#[derive(Clone, Debug)]
struct Slot<T> {
    plan: PlannedLayer,
    layer: Layer<T>,
}

/// Number of layers of each kind in a model.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct LayerCounts {
    pub conv: usize,
    pub relu: usize,
    pub maxpool: usize,
    pub avgpool: usize,
    pub linear: usize,
    pub dropout: usize,
}

#[derive(Clone, Debug)]
pub struct Model<T = f32> {
    config: ModelConfig,
    slots: Vec<Slot<T>>,
    dropout_rng: ChaCha8Rng,
    freeze_features: bool,
}

impl<T: Element> Model<T> {
    /// Builds the layer stack with all parameters set to zero.
    pub fn build(config: &ModelConfig) -> Result<Self> {
        let slots = config
            .layer_plan()?
            .into_iter()
            .map(|plan| {
                Ok(Slot {
                    layer: Layer::from_spec(&plan.spec)?,
                    plan,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Model {
            config: config.clone(),
            slots,
            dropout_rng: ChaCha8Rng::seed_from_u64(0),
            freeze_features: false,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    /// Reseeds the generator that draws dropout masks in train mode.
    pub fn set_dropout_seed(&mut self, seed: u64) {
        self.dropout_rng = ChaCha8Rng::seed_from_u64(seed);
    }

    /// When set, training leaves the convolutional section untouched:
    /// backward stops at the adaptive pool and those tensors are excluded
    /// from [`Model::trainable_params_mut`].
    pub fn set_freeze_features(&mut self, freeze: bool) {
        self.freeze_features = freeze;
    }

    pub fn features_frozen(&self) -> bool {
        self.freeze_features
    }

    pub fn plan(&self) -> impl Iterator<Item = &PlannedLayer> {
        self.slots.iter().map(|s| &s.plan)
    }

    pub fn layers(&self) -> impl Iterator<Item = &Layer<T>> {
        self.slots.iter().map(|s| &s.layer)
    }

    fn check_input(&self, batch: &Tensor<T>) -> Result<()> {
        let (_, c, h, w) = batch.dims4()?;
        if c != 3 || (h, w) != self.config.input_size {
            return Err(Error::shape(format!(
                "model expects N x 3 x {} x {} input, got {:?}",
                self.config.input_size.0,
                self.config.input_size.1,
                batch.shape()
            )));
        }
        Ok(())
    }

    /// Runs the full stack and returns raw logits `N × num_classes`.
    pub fn forward(&mut self, batch: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        self.check_input(batch)?;
        let frozen = self.freeze_features;
        let mut x = batch.clone();
        for slot in &mut self.slots {
            let skip_cache = mode == Mode::Train && frozen && slot.plan.section == Section::Features;
            x = if skip_cache {
                slot.layer.clear_cache();
                slot.layer.infer(&x)?
            } else {
                slot.layer.forward(&x, mode, &mut self.dropout_rng)?
            };
        }
        Ok(x)
    }

    /// Eval-mode forward through a shared reference.
    pub fn infer(&self, batch: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_input(batch)?;
        let mut x = batch.clone();
        for slot in &self.slots {
            x = slot.layer.infer(&x)?;
        }
        Ok(x)
    }

    /// Back-propagates `∂L/∂logits`, filling every trainable gradient slot.
    /// Returns `∂L/∂input`, or `None` when the features are frozen.
    pub fn backward(&mut self, grad_logits: &Tensor<T>) -> Result<Option<Tensor<T>>> {
        let mut g = grad_logits.clone();
        for slot in self.slots.iter_mut().rev() {
            if self.freeze_features && slot.plan.section == Section::Features {
                return Ok(None);
            }
            g = slot.layer.backward(&g)?;
        }
        Ok(Some(g))
    }

    /// `(name, param)` for every trainable tensor, e.g. `features.0.weight`.
    pub fn named_params(&self) -> Vec<(String, &Param<T>)> {
        let mut out = Vec::new();
        for slot in &self.slots {
            let prefix = slot.plan.prefix();
            for (suffix, p) in ["weight", "bias"].iter().zip(slot.layer.params()) {
                out.push((format!("{prefix}.{suffix}"), p));
            }
        }
        out
    }

    pub fn named_params_mut(&mut self) -> Vec<(String, &mut Param<T>)> {
        let mut out = Vec::new();
        for slot in &mut self.slots {
            let prefix = slot.plan.prefix();
            for (suffix, p) in ["weight", "bias"].iter().zip(slot.layer.params_mut()) {
                out.push((format!("{prefix}.{suffix}"), p));
            }
        }
        out
    }

    /// Parameters the optimizer should update, in a stable order.
    pub fn trainable_params_mut(&mut self) -> Vec<&mut Param<T>> {
        let frozen = self.freeze_features;
        self.slots
            .iter_mut()
            .filter(|s| !(frozen && s.plan.section == Section::Features))
            .flat_map(|s| s.layer.params_mut())
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.slots
            .iter()
            .flat_map(|s| s.layer.params())
            .map(|p| p.len())
            .sum()
    }

    pub fn layer_counts(&self) -> LayerCounts {
        let mut c = LayerCounts::default();
        for slot in &self.slots {
            match slot.plan.spec {
                LayerSpec::Conv2d { .. } => c.conv += 1,
                LayerSpec::ReLU => c.relu += 1,
                LayerSpec::MaxPool2d { .. } => c.maxpool += 1,
                LayerSpec::AdaptiveAvgPool2d { .. } => c.avgpool += 1,
                LayerSpec::Linear { .. } => c.linear += 1,
                LayerSpec::Dropout { .. } => c.dropout += 1,
                LayerSpec::Flatten | LayerSpec::Softmax => {}
            }
        }
        c
    }

    pub fn clear_caches(&mut self) {
        self.slots.iter_mut().for_each(|s| s.layer.clear_cache());
    }

    /// Name prefix of the final classification layer (`classifier.6`).
    pub fn head_prefix(&self) -> String {
        self.slots
            .iter()
            .rev()
            .find(|s| matches!(s.plan.spec, LayerSpec::Linear { .. }))
            .map(|s| s.plan.prefix())
            .expect("model has a linear head")
    }

    /// He-uniform initialization of every conv/linear layer.
    pub fn init_he_uniform(&mut self, seed: u64) {
        for i in 0..self.slots.len() {
            self.init_slot(i, seed);
        }
    }

    /// Re-draws the final classification layer only.
    pub fn reinit_head(&mut self, seed: u64) {
        let idx = self
            .slots
            .iter()
            .rposition(|s| matches!(s.plan.spec, LayerSpec::Linear { .. }))
            .expect("model has a linear head");
        self.init_slot(idx, seed);
    }

    /// Weights `~ U(-b, b)` with `b = sqrt(6 / fan_in)`, biases zero. Each
    /// layer draws from its own ChaCha stream so re-initializing one layer
    /// reproduces what a full initialization would have given it.
    fn init_slot(&mut self, index: usize, seed: u64) {
        let slot = &mut self.slots[index];
        let fan_in = match slot.plan.spec {
            LayerSpec::Conv2d {
                in_channels,
                geometry,
                ..
            } => in_channels * geometry.kernel.0 * geometry.kernel.1,
            LayerSpec::Linear { in_features, .. } => in_features,
            _ => return,
        };
        let bound = he_uniform_bound(fan_in);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(index as u64);
        let mut params = slot.layer.params_mut();
        for w in params[0].value.data_mut() {
            *w = T::from_f64(rng.random::<f64>() * 2.0 * bound - bound);
        }
        params[1].value.data_mut().iter_mut().for_each(|b| *b = T::zero());
    }

    /// Applies an initialization scheme.
    pub fn init_weights(&mut self, scheme: &InitScheme) -> Result<()>
    where
        T: CheckpointElement,
    {
        match scheme {
            InitScheme::HeUniform { seed } => {
                self.init_he_uniform(*seed);
                Ok(())
            }
            InitScheme::InterchangeFile {
                path,
                replace_head,
                seed,
            } => {
                let path = path
                    .as_ref()
                    .ok_or_else(|| Error::config("interchange-file initialization needs a weights path"))?;
                T::load_into(
                    self,
                    path,
                    &LoadOptions {
                        replace_head: *replace_head,
                        head_seed: *seed,
                    },
                )
            }
        }
    }

    /// Text rendering of the layer stack in PyTorch module-print style,
    /// without the implicit flatten.
    pub fn summary(&self) -> String {
        let mut s = String::from("VGG(\n");
        let mut open: Option<Section> = None;
        for slot in &self.slots {
            let section = slot.plan.section;
            if open != Some(section)
                && open.is_some_and(|o| o == Section::Features || o == Section::Classifier)
            {
                s.push_str("  )\n");
            }
            match section {
                Section::Features | Section::Classifier => {
                    if open != Some(section) {
                        let _ = writeln!(s, "  ({}): Sequential(", section.name());
                    }
                    let _ = writeln!(s, "    ({}): {}", slot.plan.index, slot.plan.spec);
                }
                Section::AvgPool => {
                    let _ = writeln!(s, "  (avgpool): {}", slot.plan.spec);
                }
                Section::Flatten => {}
            }
            open = Some(section);
        }
        s.push_str("  )\n)");
        s
    }
}

/// `sqrt(6 / fan_in)`.
pub fn he_uniform_bound(fan_in: usize) -> f64 {
    (6.0 / fan_in as f64).sqrt()
}

/// Element types that can be loaded from a `VGGW` file (stored as `f32`).
pub trait CheckpointElement: Element {
    fn load_into(model: &mut Model<Self>, path: &std::path::Path, options: &LoadOptions) -> Result<()>;
}

impl CheckpointElement for f32 {
    fn load_into(model: &mut Model<f32>, path: &std::path::Path, options: &LoadOptions) -> Result<()> {
        checkpoint::load_into(model, path, options)
    }
}

impl CheckpointElement for f64 {
    fn load_into(model: &mut Model<f64>, path: &std::path::Path, options: &LoadOptions) -> Result<()> {
        let mut single = Model::<f32>::build(model.config())?;
        checkpoint::load_into(&mut single, path, options)?;
        for ((_, dst), (_, src)) in model.named_params_mut().into_iter().zip(single.named_params()) {
            dst.value = src.value.cast();
        }
        Ok(())
    }
}
