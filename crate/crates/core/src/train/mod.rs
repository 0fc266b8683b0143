//! Training runs, evaluation, single-image prediction and curve export.

mod config;
mod history;

use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::data::{self, batch_iter, derive_seed, BatchOptions, Dataset, Label};
use crate::error::{Error, Result};
use crate::layers::{softmax_rows, Mode};
use crate::metrics::{classification_report, roc_auc, MetricsReport, RocCurve};
use crate::model::{save_checkpoint, InitScheme, Model};
use crate::optim::{softmax_cross_entropy, Adam, Reduction};
use crate::tensor::Tensor;

pub use config::{DataConfig, OutputConfig, Overrides, RunConfig, TrainConfig};
pub use history::{epoch_line, export_curves, EpochRecord, TrainingHistory};

const DROPOUT_TAG: u64 = 10;
const VAL_SPLIT_TAG: u64 = 11;
const HEAD_TAG: u64 = 12;

/// Anything that maps a normalized `N × 3 × H × W` batch to `N × 2` logits.
pub trait Classifier {
    fn input_size(&self) -> (usize, usize);
    fn logits(&self, batch: &Tensor<f32>) -> Result<Tensor<f32>>;
}

impl Classifier for Model<f32> {
    fn input_size(&self) -> (usize, usize) {
        self.config().input_size
    }

    fn logits(&self, batch: &Tensor<f32>) -> Result<Tensor<f32>> {
        self.infer(batch)
    }
}

/// Index of the largest entry per row; ties go to the lower index, so an
/// undecided binary output reads as NoFire.
pub fn argmax_rows(t: &Tensor<f32>) -> Result<Vec<usize>> {
    let (_, k) = t.dims2()?;
    Ok(t.data()
        .chunks_exact(k)
        .map(|row| {
            let mut best = 0;
            for (j, &v) in row.iter().enumerate().skip(1) {
                if v > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect())
}

fn binary_probs(logits: &Tensor<f32>) -> Result<Tensor<f32>> {
    let (_, k) = logits.dims2()?;
    if k != 2 {
        return Err(Error::input(format!(
            "binary evaluation needs 2 classes, model has {k}"
        )));
    }
    softmax_rows(logits)
}

#[derive(Clone, Debug)]
pub struct Splits {
    pub train: Dataset,
    pub val: Option<Dataset>,
    pub test: Option<Dataset>,
}

/// Loads the configured dataset and carves off test and validation sets.
pub fn prepare_splits(cfg: &RunConfig) -> Result<Splits> {
    let root = cfg
        .data
        .root
        .as_deref()
        .ok_or_else(|| Error::config("no data root given"))?;
    let full = data::load_dataset(root, cfg.data.layout)?;
    split_dataset(cfg, full)
}

pub fn split_dataset(cfg: &RunConfig, full: Dataset) -> Result<Splits> {
    let d = &cfg.data;
    let seed = cfg.train.seed;
    let (rest, test) = if d.test_fraction > 0.0 {
        let (a, b) = full.split(d.test_fraction, seed, d.stratified)?;
        (a, Some(b))
    } else {
        (full, None)
    };
    let (train, val) = if d.val_fraction > 0.0 {
        let f = d.val_fraction / (1.0 - d.test_fraction);
        let (a, b) = rest.split(f, derive_seed(seed, &[VAL_SPLIT_TAG]), d.stratified)?;
        (a, Some(b))
    } else {
        (rest, None)
    };
    Ok(Splits { train, val, test })
}

/// Model built and initialized as the configuration says.
pub fn build_model(cfg: &RunConfig) -> Result<Model<f32>> {
    let mut model = Model::build(&cfg.model)?;
    let seed = cfg.train.seed;
    let scheme = match &cfg.output.weights {
        Some(path) => InitScheme::InterchangeFile {
            path: Some(path.clone()),
            replace_head: cfg.output.replace_head,
            seed: derive_seed(seed, &[HEAD_TAG]),
        },
        None => InitScheme::HeUniform { seed },
    };
    model.init_weights(&scheme)?;
    model.set_dropout_seed(derive_seed(seed, &[DROPOUT_TAG]));
    model.set_freeze_features(cfg.train.freeze_features);
    Ok(model)
}

#[derive(Debug)]
pub struct TrainRun {
    pub model: Model<f32>,
    pub history: TrainingHistory,
    pub splits: Splits,
    /// Test-split evaluation, when a test split exists.
    pub evaluation: Option<Evaluation>,
}

/// Full run from a configuration. Epoch lines go to the `log` facade.
pub fn train(cfg: &RunConfig) -> Result<TrainRun> {
    train_with_progress(cfg, &mut |line| log::info!("{line}"))
}

pub fn train_with_progress(cfg: &RunConfig, progress: &mut dyn FnMut(&str)) -> Result<TrainRun> {
    cfg.validate()?;
    let splits = prepare_splits(cfg)?;
    train_on_splits(cfg, splits, progress)
}

/// Trains on `splits.train`, validating after each epoch when a validation
/// split exists, and evaluates on the test split at the end.
pub fn train_on_splits(cfg: &RunConfig, splits: Splits, progress: &mut dyn FnMut(&str)) -> Result<TrainRun> {
    cfg.validate()?;
    let mut model = build_model(cfg)?;
    let mut adam: Adam<f32> = Adam::new(cfg.adam());
    let out_dir = cfg.output.dir.as_deref();
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join("config.toml");
        std::fs::write(&path, cfg.to_toml()).map_err(|e| Error::io(&path, e))?;
    }

    let epochs = cfg.train.epochs;
    let mut history = TrainingHistory::new(epochs);
    for epoch in 1..=epochs {
        let start = Instant::now();
        let opts = BatchOptions {
            batch_size: cfg.train.batch_size,
            shuffle: true,
            seed: cfg.train.seed,
            epoch: epoch as u64,
            image_size: cfg.model.input_size,
            augment: cfg.augment_policy(),
            strict: cfg.data.strict,
        };
        let (mut loss_sum, mut seen, mut correct) = (0.0f64, 0usize, 0usize);
        for (b, batch) in batch_iter(&splits.train, opts)?.enumerate() {
            let batch = batch?;
            let labels = batch.label_indices();
            let logits = model.forward(&batch.images, Mode::Train)?;
            let (loss, grad) = softmax_cross_entropy(&logits, &labels, Reduction::Mean)?;
            if !loss.loss.is_finite() {
                return Err(Error::NonFinite {
                    epoch,
                    batch: b + 1,
                    value: loss.loss,
                });
            }
            correct += argmax_rows(&logits)?
                .iter()
                .zip(&labels)
                .filter(|(p, t)| p == t)
                .count();
            seen += labels.len();
            loss_sum += loss.loss * labels.len() as f64;
            model.backward(&grad)?;
            adam.step(&mut model.trainable_params_mut())?;
        }
        model.clear_caches();
        if seen == 0 {
            return Err(Error::Dataset("no training sample could be decoded".into()));
        }
        let (val_loss, val_accuracy) = match &splits.val {
            Some(val) => {
                let (l, a) = loss_and_accuracy(&model, val, cfg.train.batch_size, cfg.data.strict)?;
                (Some(l), Some(a))
            }
            None => (None, None),
        };
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / seen as f64,
            train_accuracy: 100.0 * correct as f64 / seen as f64,
            val_loss,
            val_accuracy,
            seconds: start.elapsed().as_secs_f64(),
        };
        progress(&history.epoch_line(&record));
        history.push(record)?;
        if let Some(dir) = out_dir {
            save_checkpoint(&model, dir.join(format!("epoch_{epoch}.vggw")))?;
            let keep = cfg.train.keep_checkpoints;
            if keep > 0 && epoch > keep {
                let old = dir.join(format!("epoch_{}.vggw", epoch - keep));
                if old.exists() {
                    std::fs::remove_file(&old).map_err(|e| Error::io(&old, e))?;
                }
            }
        }
    }

    let evaluation = match &splits.test {
        Some(test) => Some(evaluate(&model, test, cfg.train.batch_size, cfg.data.strict)?),
        None => None,
    };
    if let Some(dir) = out_dir {
        save_checkpoint(&model, dir.join("final.vggw"))?;
        history.save(&dir.join("history.json"))?;
        export_curves(&history, dir)?;
        if let Some(ev) = &evaluation {
            ev.write(dir)?;
        }
    }
    Ok(TrainRun {
        model,
        history,
        splits,
        evaluation,
    })
}

/// Mean cross-entropy and accuracy (percent) without augmentation or dropout.
pub fn loss_and_accuracy(
    model: &Model<f32>,
    ds: &Dataset,
    batch_size: usize,
    strict: bool,
) -> Result<(f64, f64)> {
    let scored = score(model, ds, batch_size, strict)?;
    let n = scored.truth.len().max(1) as f64;
    let correct = scored
        .predictions
        .iter()
        .zip(&scored.truth)
        .filter(|(p, t)| p == t)
        .count();
    Ok((scored.loss_sum / n, 100.0 * correct as f64 / n))
}

struct Scored {
    ids: Vec<String>,
    truth: Vec<Label>,
    predictions: Vec<Label>,
    fire_scores: Vec<f64>,
    loss_sum: f64,
}

fn score(clf: &dyn Classifier, ds: &Dataset, batch_size: usize, strict: bool) -> Result<Scored> {
    let opts = BatchOptions {
        batch_size,
        image_size: clf.input_size(),
        strict,
        ..Default::default()
    };
    let mut s = Scored {
        ids: Vec::new(),
        truth: Vec::new(),
        predictions: Vec::new(),
        fire_scores: Vec::new(),
        loss_sum: 0.0,
    };
    for batch in batch_iter(ds, opts)? {
        let batch = batch?;
        let logits = clf.logits(&batch.images)?;
        let probs = binary_probs(&logits)?;
        let labels = batch.label_indices();
        let (loss, _) = softmax_cross_entropy(&logits, &labels, Reduction::Sum)?;
        s.loss_sum += loss.loss;
        for i in argmax_rows(&logits)? {
            s.predictions.push(Label::from_index(i)?);
        }
        s.fire_scores.extend(
            probs
                .data()
                .chunks_exact(2)
                .map(|r| r[Label::Fire.index()] as f64),
        );
        s.truth.extend(batch.labels);
        s.ids.extend(batch.ids);
    }
    if s.truth.is_empty() {
        return Err(Error::Dataset("evaluation set has no decodable samples".into()));
    }
    Ok(s)
}

#[derive(Clone, Debug)]
pub struct Evaluation {
    pub report: MetricsReport,
    pub roc: RocCurve,
    pub ids: Vec<String>,
    pub truth: Vec<Label>,
    pub predictions: Vec<Label>,
    pub fire_scores: Vec<f64>,
}

impl Evaluation {
    pub fn predictions_csv(&self) -> String {
        let mut s = String::from("id,truth,prediction,fire_probability\n");
        for i in 0..self.ids.len() {
            s.push_str(&format!(
                "{},{},{},{:.6}\n",
                self.ids[i], self.truth[i], self.predictions[i], self.fire_scores[i]
            ));
        }
        s
    }

    /// `report.txt`, `report.json`, `roc.csv` and `predictions.csv`.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let json = serde_json::to_string_pretty(&self.report.to_json()).expect("json");
        let files = [
            ("report.txt", self.report.render_text()),
            ("report.json", json),
            ("roc.csv", self.roc.to_csv()),
            ("predictions.csv", self.predictions_csv()),
        ];
        let mut written = Vec::new();
        for (name, body) in files {
            let path = dir.join(name);
            std::fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
            written.push(path);
        }
        Ok(written)
    }
}

/// Eval-mode pass over `ds`: Fire probabilities as scores, argmax as
/// predictions. Needs both classes in the ground truth.
pub fn evaluate(clf: &dyn Classifier, ds: &Dataset, batch_size: usize, strict: bool) -> Result<Evaluation> {
    if ds.is_empty() {
        return Err(Error::input("evaluation set is empty"));
    }
    let s = score(clf, ds, batch_size.max(1), strict)?;
    let roc = roc_auc(&s.fire_scores, &s.truth)?;
    let mut report = classification_report(&s.predictions, &s.truth)?;
    report.auc = Some(roc.auc);
    Ok(Evaluation {
        report,
        roc,
        ids: s.ids,
        truth: s.truth,
        predictions: s.predictions,
        fire_scores: s.fire_scores,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub label: Label,
    pub fire_probability: f64,
}

impl Prediction {
    pub fn from_logits(logits: &Tensor<f32>) -> Result<Self> {
        let probs = binary_probs(logits)?;
        Ok(Prediction {
            label: Label::from_index(argmax_rows(logits)?[0])?,
            fire_probability: probs.data()[Label::Fire.index()] as f64,
        })
    }

    /// `<path>\t<class>\t<probability>`.
    pub fn line(&self, path: &Path) -> String {
        format!(
            "{}\t{}\t{:.4}",
            path.display(),
            self.label.name(),
            self.fire_probability
        )
    }
}

/// Decodes, resizes, normalizes and classifies one image file.
pub fn predict(clf: &dyn Classifier, path: &Path) -> Result<Prediction> {
    let id = path.display().to_string();
    let raw = data::load_image(path, &id)?;
    let (h, w) = clf.input_size();
    let pixels = data::preprocess(&raw, (h, w));
    let batch = pixels.into_reshape(&[1, 3, h, w])?;
    Prediction::from_logits(&clf.logits(&batch)?)
}
