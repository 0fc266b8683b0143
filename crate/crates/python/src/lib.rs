//! Python bindings: model construction, checkpoints, inference, training
//! runs and the evaluation metrics.

use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use vggfire::data::{Label, RawImage};
use vggfire::metrics::ConfusionMatrix;
use vggfire::model::{load_checkpoint, save_checkpoint, LoadOptions};
use vggfire::train::{Classifier, Prediction, RunConfig};
use vggfire::{Architecture, Error, ModelConfig, Tensor, WidthMultiplier};

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyIOError::new_err(e.to_string()),
        Error::NonFinite { .. } | Error::State(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn json<'py>(py: Python<'py>, text: &str) -> PyResult<Bound<'py, PyAny>> {
    py.import("json")?.call_method1("loads", (text,))
}

fn labels(values: &[u8]) -> PyResult<Vec<Label>> {
    values
        .iter()
        .map(|&v| Label::from_index(v as usize).map_err(to_py))
        .collect()
}

fn model_config(
    arch: &str,
    width: &str,
    input_size: usize,
    num_classes: usize,
) -> vggfire::Result<ModelConfig> {
    let mut cfg = match arch.parse::<Architecture>()? {
        Architecture::Vgg16 => ModelConfig::vgg16(num_classes),
        Architecture::VggMini => ModelConfig::vgg_mini(
            width.parse::<WidthMultiplier>()?,
            (input_size, input_size),
            num_classes,
        ),
    };
    if cfg.architecture == Architecture::Vgg16 {
        cfg.input_size = (input_size, input_size);
    }
    cfg.validate()?;
    Ok(cfg)
}

/// A VGG network with `f32` parameters.
#[pyclass(name = "Model")]
struct PyModel {
    inner: vggfire::Model<f32>,
}

#[pymethods]
impl PyModel {
    #[new]
    #[pyo3(signature = (arch = "vgg16", width = "1", input_size = 224, num_classes = 2, seed = 0))]
    fn new(arch: &str, width: &str, input_size: usize, num_classes: usize, seed: u64) -> PyResult<Self> {
        let cfg = model_config(arch, width, input_size, num_classes).map_err(to_py)?;
        let mut inner = vggfire::Model::build(&cfg).map_err(to_py)?;
        inner.init_he_uniform(seed);
        Ok(PyModel { inner })
    }

    /// Loads a `.vggw` file into a model of the given shape.
    #[staticmethod]
    #[pyo3(signature = (path, arch = "vgg16", width = "1", input_size = 224, num_classes = 2, replace_head = false, seed = 0))]
    fn load(
        path: PathBuf,
        arch: &str,
        width: &str,
        input_size: usize,
        num_classes: usize,
        replace_head: bool,
        seed: u64,
    ) -> PyResult<Self> {
        let cfg = model_config(arch, width, input_size, num_classes).map_err(to_py)?;
        let opts = LoadOptions {
            replace_head,
            head_seed: seed,
        };
        let inner = load_checkpoint(&path, &cfg, &opts).map_err(to_py)?;
        Ok(PyModel { inner })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        save_checkpoint(&self.inner, &path).map_err(to_py)
    }

    #[getter]
    fn param_count(&self) -> usize {
        self.inner.param_count()
    }

    #[getter]
    fn input_size(&self) -> (usize, usize) {
        self.inner.config().input_size
    }

    fn layer_counts(&self) -> Vec<(&'static str, usize)> {
        let c = self.inner.layer_counts();
        vec![
            ("conv", c.conv),
            ("relu", c.relu),
            ("maxpool", c.maxpool),
            ("avgpool", c.avgpool),
            ("linear", c.linear),
            ("dropout", c.dropout),
        ]
    }

    fn param_names(&self) -> Vec<String> {
        self.inner.named_params().into_iter().map(|(n, _)| n).collect()
    }

    fn summary(&self) -> String {
        self.inner.summary()
    }

    /// Eval-mode logits for a flat `N*3*H*W` batch; returns `N` rows.
    fn logits(&self, py: Python<'_>, pixels: Vec<f32>, batch: usize) -> PyResult<Vec<Vec<f32>>> {
        let (h, w) = self.inner.config().input_size;
        let x = Tensor::new(&[batch, 3, h, w], pixels).map_err(to_py)?;
        let y = py.detach(|| self.inner.logits(&x)).map_err(to_py)?;
        let k = y.shape()[1];
        Ok(y.data().chunks_exact(k).map(<[f32]>::to_vec).collect())
    }

    /// `(class_name, fire_probability)` for an image file.
    fn predict(&self, py: Python<'_>, path: PathBuf) -> PyResult<(String, f64)> {
        let p: Prediction = py
            .detach(|| vggfire::train::predict(&self.inner, &path))
            .map_err(to_py)?;
        Ok((p.label.name().to_string(), p.fire_probability))
    }
}

/// Runs training from a TOML configuration and returns the history as a
/// list of per-epoch dicts.
#[pyfunction]
fn train<'py>(py: Python<'py>, config_toml: &str) -> PyResult<Bound<'py, PyAny>> {
    let cfg = RunConfig::from_toml(config_toml).map_err(to_py)?;
    let run = py.detach(|| vggfire::train::train(&cfg)).map_err(to_py)?;
    json(py, &run.history.to_json())?.get_item("records")
}

/// Full report for a binary confusion matrix with Fire as positive.
#[pyfunction]
#[pyo3(name = "report", signature = (tp, fp, fn_, tn))]
fn report_py<'py>(
    py: Python<'py>,
    tp: usize,
    fp: usize,
    fn_: usize,
    tn: usize,
) -> PyResult<Bound<'py, PyAny>> {
    let r = vggfire::metrics::report_from_confusion(&ConfusionMatrix::new(tp, fp, fn_, tn)).map_err(to_py)?;
    json(py, &r.to_json().to_string())
}

/// Report from predicted and true labels (0 = no fire, 1 = fire).
#[pyfunction]
fn classification_report<'py>(
    py: Python<'py>,
    predictions: Vec<u8>,
    truth: Vec<u8>,
) -> PyResult<Bound<'py, PyAny>> {
    let r =
        vggfire::metrics::classification_report(&labels(&predictions)?, &labels(&truth)?).map_err(to_py)?;
    json(py, &r.to_json().to_string())
}

#[pyfunction]
fn roc_auc(scores: Vec<f64>, truth: Vec<u8>) -> PyResult<f64> {
    Ok(vggfire::metrics::roc_auc(&scores, &labels(&truth)?)
        .map_err(to_py)?
        .auc)
}

#[pyfunction]
fn roc_csv(scores: Vec<f64>, truth: Vec<u8>) -> PyResult<String> {
    Ok(vggfire::metrics::roc_auc(&scores, &labels(&truth)?)
        .map_err(to_py)?
        .to_csv())
}

/// Scales CHW `u8` pixels into `[0, 1]`.
#[pyfunction]
fn normalize(width: usize, height: usize, pixels: Vec<u8>) -> PyResult<Vec<f32>> {
    let img = RawImage::new(width, height, pixels).map_err(to_py)?;
    Ok(vggfire::data::normalize(&img).into_data())
}

#[pyfunction]
fn epoch_line(epoch: usize, epochs: usize, loss: f64, accuracy: f64) -> String {
    vggfire::train::epoch_line(epoch, epochs, loss, accuracy)
}

#[pymodule]
pub fn vggfire_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(report_py, m)?)?;
    m.add_function(wrap_pyfunction!(classification_report, m)?)?;
    m.add_function(wrap_pyfunction!(roc_auc, m)?)?;
    m.add_function(wrap_pyfunction!(roc_csv, m)?)?;
    m.add_function(wrap_pyfunction!(normalize, m)?)?;
    m.add_function(wrap_pyfunction!(epoch_line, m)?)?;
    Ok(())
}
