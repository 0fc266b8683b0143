//! A self-contained CPU engine for training and evaluating VGG-style
//! convolutional networks on binary fire / no-fire image classification.
//!
//! The crate is layered bottom-up:
//!
//! * [`tensor`] - dense NCHW storage, blocked GEMM, im2col/col2im.
//! * [`layers`] - forward and hand-written backward passes per layer type.
//! * [`model`] - the VGG16 stack (and a width-scaled `vgg-mini`), weight
//!   initialization and the `VGGW` checkpoint format.
//! * [`optim`] - softmax cross-entropy and Adam.
//! * [`data`] - decoding, resizing, normalization, augmentation, dataset
//!   layouts, splitting and batching.
//! * [`metrics`] - confusion matrix, classification report, ROC/AUC.
//! * [`train`] - run configuration, the training loop, evaluation,
//!   prediction and curve export.

pub mod data;
pub mod error;
pub mod layers;
pub mod metrics;
pub mod model;
pub mod optim;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use layers::{Layer, LayerSpec, Mode, Param};
pub use model::{Architecture, InitScheme, Model, ModelConfig, WidthMultiplier};
pub use tensor::{Element, Tensor};
