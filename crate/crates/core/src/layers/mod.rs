//! Layer types with forward passes and hand-written backward passes.
//!
//! A layer caches whatever its backward pass needs only when it runs forward
//! in [`Mode::Train`]; an eval-mode forward drops the cache. Parameterized
//! layers (`Conv2d`, `Linear`) fill the gradient slot of each [`Param`] on
//! backward, overwriting what was there.

mod activation;
mod conv;
mod linear;
mod pool;

use std::fmt;

use rand::RngCore;

use crate::error::{Error, Result};
use crate::tensor::{ConvGeometry, Element, Tensor};

pub use activation::{softmax_rows, Dropout, Relu, Softmax};
pub use conv::Conv2d;
pub use linear::{Flatten, Linear};
pub use pool::{adaptive_region, AdaptiveAvgPool2d, MaxPool2d};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Mode {
    Train,
    #[default]
    Eval,
}

/// A trainable tensor plus its gradient slot. The slot is allocated by the
/// first backward pass and always has the parameter's shape.
#[derive(Clone, Debug, PartialEq)]
pub struct Param<T = f32> {
    pub value: Tensor<T>,
    grad: Option<Tensor<T>>,
}

impl<T: Element> Param<T> {
    pub fn new(value: Tensor<T>) -> Self {
        Param { value, grad: None }
    }

    pub fn grad(&self) -> Option<&Tensor<T>> {
        self.grad.as_ref()
    }

    pub fn set_grad(&mut self, grad: Tensor<T>) -> Result<()> {
        if grad.shape() != self.value.shape() {
            return Err(Error::shape(format!(
                "gradient shape {:?} does not match parameter shape {:?}",
                grad.shape(),
                self.value.shape()
            )));
        }
        self.grad = Some(grad);
        Ok(())
    }

    pub fn clear_grad(&mut self) {
        self.grad = None;
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }
}

/// Kind and hyperparameters of a layer.
#[derive(Clone, Debug, PartialEq)]
pub enum LayerSpec {
    Conv2d {
        in_channels: usize,
        out_channels: usize,
        geometry: ConvGeometry,
    },
    ReLU,
    MaxPool2d {
        kernel: usize,
        stride: usize,
    },
    AdaptiveAvgPool2d {
        output: (usize, usize),
    },
    Flatten,
    Linear {
        in_features: usize,
        out_features: usize,
    },
    Dropout {
        p: f64,
    },
    Softmax,
}

impl LayerSpec {
    /// 3×3, stride 1, padding 1 convolution.
    pub fn conv3x3(in_channels: usize, out_channels: usize) -> Self {
        LayerSpec::Conv2d {
            in_channels,
            out_channels,
            geometry: ConvGeometry::square(3, 1, 1),
        }
    }

    pub fn max_pool_2x2() -> Self {
        LayerSpec::MaxPool2d { kernel: 2, stride: 2 }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
                geometry,
            } => {
                if in_channels == 0 || out_channels == 0 {
                    return Err(Error::config("Conv2d channel counts must be positive"));
                }
                let (kh, kw) = geometry.kernel;
                let (sh, sw) = geometry.stride;
                if kh == 0 || kw == 0 || sh == 0 || sw == 0 {
                    return Err(Error::config("Conv2d kernel and stride must be positive"));
                }
            }
            LayerSpec::MaxPool2d { kernel, stride } => {
                if kernel == 0 || stride == 0 {
                    return Err(Error::config("MaxPool2d kernel and stride must be positive"));
                }
            }
            LayerSpec::AdaptiveAvgPool2d { output: (h, w) } => {
                if h == 0 || w == 0 {
                    return Err(Error::config("AdaptiveAvgPool2d output must be positive"));
                }
            }
            LayerSpec::Linear {
                in_features,
                out_features,
            } => {
                if in_features == 0 || out_features == 0 {
                    return Err(Error::config("Linear feature counts must be positive"));
                }
            }
            LayerSpec::Dropout { p } => {
                if !(0.0..1.0).contains(&p) {
                    return Err(Error::config(format!(
                        "Dropout probability must be in [0, 1), got {p}"
                    )));
                }
            }
            LayerSpec::ReLU | LayerSpec::Flatten | LayerSpec::Softmax => {}
        }
        Ok(())
    }

    /// Shapes of the trainable tensors, weight first.
    pub fn param_shapes(&self) -> Vec<Vec<usize>> {
        match *self {
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
                geometry,
            } => vec![
                vec![out_channels, in_channels, geometry.kernel.0, geometry.kernel.1],
                vec![out_channels],
            ],
            LayerSpec::Linear {
                in_features,
                out_features,
            } => vec![vec![out_features, in_features], vec![out_features]],
            _ => Vec::new(),
        }
    }

    pub fn param_count(&self) -> usize {
        self.param_shapes()
            .iter()
            .map(|s| s.iter().product::<usize>())
            .sum()
    }

    /// Short kind name, as printed before the parenthesized arguments.
    pub fn kind(&self) -> &'static str {
        match self {
            LayerSpec::Conv2d { .. } => "Conv2d",
            LayerSpec::ReLU => "ReLU",
            LayerSpec::MaxPool2d { .. } => "MaxPool2d",
            LayerSpec::AdaptiveAvgPool2d { .. } => "AdaptiveAvgPool2d",
            LayerSpec::Flatten => "Flatten",
            LayerSpec::Linear { .. } => "Linear",
            LayerSpec::Dropout { .. } => "Dropout",
            LayerSpec::Softmax => "Softmax",
        }
    }
}

impl fmt::Display for LayerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
                geometry: g,
            } => write!(
                f,
                "Conv2d({in_channels}, {out_channels}, kernel_size=({}, {}), stride=({}, {}), padding=({}, {}))",
                g.kernel.0, g.kernel.1, g.stride.0, g.stride.1, g.pad.0, g.pad.1
            ),
            LayerSpec::ReLU => write!(f, "ReLU(inplace=True)"),
            LayerSpec::MaxPool2d { kernel, stride } => write!(
                f,
                "MaxPool2d(kernel_size={kernel}, stride={stride}, padding=0, dilation=1, ceil_mode=False)"
            ),
            LayerSpec::AdaptiveAvgPool2d { output: (h, w) } => {
                write!(f, "AdaptiveAvgPool2d(output_size=({h}, {w}))")
            }
            LayerSpec::Flatten => write!(f, "Flatten(start_dim=1, end_dim=-1)"),
            LayerSpec::Linear {
                in_features,
                out_features,
            } => write!(
                f,
                "Linear(in_features={in_features}, out_features={out_features}, bias=True)"
            ),
            LayerSpec::Dropout { p } => write!(f, "Dropout(p={p:?}, inplace=False)"),
            LayerSpec::Softmax => write!(f, "Softmax(dim=1)"),
        }
    }
}

#[derive(Clone, Debug)]
pub enum Layer<T = f32> {
    Conv2d(Conv2d<T>),
    ReLU(Relu<T>),
    MaxPool2d(MaxPool2d),
    AdaptiveAvgPool2d(AdaptiveAvgPool2d),
    Flatten(Flatten),
    Linear(Linear<T>),
    Dropout(Dropout<T>),
    Softmax(Softmax<T>),
}

macro_rules! dispatch {
    ($self:expr, $layer:ident => $body:expr) => {
        match $self {
            Layer::Conv2d($layer) => $body,
            Layer::ReLU($layer) => $body,
            Layer::MaxPool2d($layer) => $body,
            Layer::AdaptiveAvgPool2d($layer) => $body,
            Layer::Flatten($layer) => $body,
            Layer::Linear($layer) => $body,
            Layer::Dropout($layer) => $body,
            Layer::Softmax($layer) => $body,
        }
    };
}

impl<T: Element> Layer<T> {
    /// Build a layer with zero-valued parameters.
    pub fn from_spec(spec: &LayerSpec) -> Result<Self> {
        spec.validate()?;
        Ok(match *spec {
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
                geometry,
            } => Layer::Conv2d(Conv2d::new(in_channels, out_channels, geometry)),
            LayerSpec::ReLU => Layer::ReLU(Relu::default()),
            LayerSpec::MaxPool2d { kernel, stride } => Layer::MaxPool2d(MaxPool2d::new(kernel, stride)),
            LayerSpec::AdaptiveAvgPool2d { output } => {
                Layer::AdaptiveAvgPool2d(AdaptiveAvgPool2d::new(output))
            }
            LayerSpec::Flatten => Layer::Flatten(Flatten::default()),
            LayerSpec::Linear {
                in_features,
                out_features,
            } => Layer::Linear(Linear::new(in_features, out_features)),
            LayerSpec::Dropout { p } => Layer::Dropout(Dropout::new(p)?),
            LayerSpec::Softmax => Layer::Softmax(Softmax::default()),
        })
    }

    pub fn spec(&self) -> LayerSpec {
        match self {
            Layer::Conv2d(l) => LayerSpec::Conv2d {
                in_channels: l.in_channels(),
                out_channels: l.out_channels(),
                geometry: l.geometry(),
            },
            Layer::ReLU(_) => LayerSpec::ReLU,
            Layer::MaxPool2d(l) => LayerSpec::MaxPool2d {
                kernel: l.kernel(),
                stride: l.stride(),
            },
            Layer::AdaptiveAvgPool2d(l) => LayerSpec::AdaptiveAvgPool2d { output: l.output() },
            Layer::Flatten(_) => LayerSpec::Flatten,
            Layer::Linear(l) => LayerSpec::Linear {
                in_features: l.in_features(),
                out_features: l.out_features(),
            },
            Layer::Dropout(l) => LayerSpec::Dropout { p: l.p() },
            Layer::Softmax(_) => LayerSpec::Softmax,
        }
    }

    /// Forward pass. Train mode caches backward context and makes dropout
    /// stochastic; eval mode is [`Layer::infer`] plus dropping the cache.
    pub fn forward(&mut self, input: &Tensor<T>, mode: Mode, rng: &mut dyn RngCore) -> Result<Tensor<T>> {
        match mode {
            Mode::Eval => {
                self.clear_cache();
                self.infer(input)
            }
            Mode::Train => match self {
                Layer::Dropout(l) => l.forward_train(input, rng),
                Layer::Conv2d(l) => l.forward_train(input),
                Layer::ReLU(l) => l.forward_train(input),
                Layer::MaxPool2d(l) => l.forward_train(input),
                Layer::AdaptiveAvgPool2d(l) => l.forward_train(input),
                Layer::Flatten(l) => l.forward_train(input),
                Layer::Linear(l) => l.forward_train(input),
                Layer::Softmax(l) => l.forward_train(input),
            },
        }
    }

    /// Eval-mode forward without touching any state.
    pub fn infer(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        dispatch!(self, l => l.infer(input))
    }

    /// Returns the gradient with respect to the layer input and fills the
    /// parameter gradient slots.
    pub fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        dispatch!(self, l => l.backward(grad_out))
    }

    pub fn has_cache(&self) -> bool {
        dispatch!(self, l => l.has_cache())
    }

    pub fn clear_cache(&mut self) {
        dispatch!(self, l => l.clear_cache())
    }

    /// Trainable parameters, weight then bias.
    pub fn params(&self) -> Vec<&Param<T>> {
        match self {
            Layer::Conv2d(l) => vec![&l.weight, &l.bias],
            Layer::Linear(l) => vec![&l.weight, &l.bias],
            _ => Vec::new(),
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        match self {
            Layer::Conv2d(l) => vec![&mut l.weight, &mut l.bias],
            Layer::Linear(l) => vec![&mut l.weight, &mut l.bias],
            _ => Vec::new(),
        }
    }
}

pub(crate) fn missing_cache(kind: &str) -> Error {
    Error::State(format!(
        "{kind} backward called without a cached train-mode forward"
    ))
}

pub(crate) fn expect_same_shape(expected: &[usize], got: &[usize], what: &str) -> Result<()> {
    if expected != got {
        return Err(Error::shape(format!(
            "{what}: expected shape {expected:?}, got {got:?}"
        )));
    }
    Ok(())
}
