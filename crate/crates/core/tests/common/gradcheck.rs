//! Central finite differences in f64 against the analytic backward passes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vggfire::layers::{Layer, LayerSpec, Mode};
use vggfire::optim::{softmax_cross_entropy, Reduction};
use vggfire::tensor::{ConvGeometry, Tensor};
use vggfire::{Model, ModelConfig, WidthMultiplier};

pub const H: f64 = 1e-3;
pub const TOL: f64 = 1e-4;
pub const TRIALS: usize = 6;
const DROPOUT_SEED: u64 = 99;

/// `‖a − b‖ / (‖a‖ + ‖b‖)`, zero when both vanish.
pub fn rel_error(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let norm: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt() + b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        0.0
    } else {
        diff / norm
    }
}

pub fn random_tensor(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0))
}

/// Distinct values at least 0.02 apart and away from zero, so max and ReLU
/// kinks stay out of reach of the step.
fn separated_tensor(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    let n: usize = shape.iter().product();
    let mut vals: Vec<f64> = (0..n)
        .map(|i| {
            let v = 0.05 + 0.02 * i as f64;
            if i % 2 == 0 {
                v
            } else {
                -v
            }
        })
        .collect();
    for i in (1..n).rev() {
        vals.swap(i, rng.random_range(0..=i));
    }
    Tensor::new(shape, vals).unwrap()
}

fn run(layer: &mut Layer<f64>, x: &Tensor<f64>) -> Tensor<f64> {
    // same seed every call: dropout draws the same mask each time
    let mut rng = ChaCha8Rng::seed_from_u64(DROPOUT_SEED);
    layer.forward(x, Mode::Train, &mut rng).unwrap()
}

/// Loss `Σ g ⊙ layer(x)`; worst error over ∂/∂x and every ∂/∂θ.
fn check_layer(mut layer: Layer<f64>, x: Tensor<f64>, rng: &mut ChaCha8Rng) -> f64 {
    for p in layer.params_mut() {
        p.value = random_tensor(p.value.shape(), rng);
    }
    let y = run(&mut layer, &x);
    let g = random_tensor(y.shape(), rng);
    let dx = layer.backward(&g).unwrap();
    let analytic_params: Vec<Vec<f64>> = layer
        .params()
        .iter()
        .map(|p| p.grad().unwrap().data().to_vec())
        .collect();
    let objective = |layer: &mut Layer<f64>, x: &Tensor<f64>| run(layer, x).dot(&g).unwrap();

    let numeric: Vec<f64> = (0..x.len())
        .map(|i| {
            let mut xp = x.clone();
            xp.data_mut()[i] += H;
            let mut xm = x.clone();
            xm.data_mut()[i] -= H;
            (objective(&mut layer, &xp) - objective(&mut layer, &xm)) / (2.0 * H)
        })
        .collect();
    let mut worst = rel_error(dx.data(), &numeric);

    for (pi, analytic) in analytic_params.iter().enumerate() {
        let mut numeric = vec![0.0; analytic.len()];
        for (i, slot) in numeric.iter_mut().enumerate() {
            let orig = layer.params()[pi].value.data()[i];
            layer.params_mut()[pi].value.data_mut()[i] = orig + H;
            let up = objective(&mut layer, &x);
            layer.params_mut()[pi].value.data_mut()[i] = orig - H;
            let down = objective(&mut layer, &x);
            layer.params_mut()[pi].value.data_mut()[i] = orig;
            *slot = (up - down) / (2.0 * H);
        }
        worst = worst.max(rel_error(analytic, &numeric));
    }
    worst
}

/// Random NCHW shape within 2×3×8×8.
fn shape(rng: &mut ChaCha8Rng, even: bool) -> [usize; 4] {
    let side = |rng: &mut ChaCha8Rng| {
        if even {
            2 * rng.random_range(1..=4)
        } else {
            rng.random_range(2..=8)
        }
    };
    [
        rng.random_range(1..=2),
        rng.random_range(1..=3),
        side(rng),
        side(rng),
    ]
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Case {
    Conv3x3,
    ConvOther,
    Relu,
    MaxPool,
    AvgPool,
    Linear,
    Flatten,
    Dropout,
    Softmax,
    SoftmaxCrossEntropy,
}

impl Case {
    pub const ALL: [Case; 10] = [
        Case::Conv3x3,
        Case::ConvOther,
        Case::Relu,
        Case::MaxPool,
        Case::AvgPool,
        Case::Linear,
        Case::Flatten,
        Case::Dropout,
        Case::Softmax,
        Case::SoftmaxCrossEntropy,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Case::Conv3x3 => "Conv2d 3x3/s1/p1",
            Case::ConvOther => "Conv2d 2x2/s2 and 3x3/p0",
            Case::Relu => "ReLU",
            Case::MaxPool => "MaxPool2d 2x2",
            Case::AvgPool => "AdaptiveAvgPool2d",
            Case::Linear => "Linear",
            Case::Flatten => "Flatten",
            Case::Dropout => "Dropout (fixed mask)",
            Case::Softmax => "Softmax",
            Case::SoftmaxCrossEntropy => "Softmax + cross-entropy (fused)",
        }
    }

    fn one(self, rng: &mut ChaCha8Rng) -> f64 {
        let layer = |spec: LayerSpec| Layer::<f64>::from_spec(&spec).unwrap();
        match self {
            Case::Conv3x3 => {
                let s = shape(rng, false);
                let out = rng.random_range(1..=3);
                check_layer(layer(LayerSpec::conv3x3(s[1], out)), random_tensor(&s, rng), rng)
            }
            Case::ConvOther => {
                let mut s = shape(rng, true);
                let geometry = if rng.random_bool(0.5) {
                    ConvGeometry::square(2, 2, 0)
                } else {
                    s[2] = s[2].max(3);
                    s[3] = s[3].max(3);
                    ConvGeometry::square(3, 1, 0)
                };
                let spec = LayerSpec::Conv2d {
                    in_channels: s[1],
                    out_channels: 2,
                    geometry,
                };
                check_layer(layer(spec), random_tensor(&s, rng), rng)
            }
            Case::Relu => {
                let s = shape(rng, false);
                check_layer(layer(LayerSpec::ReLU), separated_tensor(&s, rng), rng)
            }
            Case::MaxPool => {
                let s = shape(rng, true);
                check_layer(layer(LayerSpec::max_pool_2x2()), separated_tensor(&s, rng), rng)
            }
            Case::AvgPool => {
                let s = shape(rng, false);
                let output = (rng.random_range(1..=s[2]), rng.random_range(1..=s[3]));
                check_layer(
                    layer(LayerSpec::AdaptiveAvgPool2d { output }),
                    random_tensor(&s, rng),
                    rng,
                )
            }
            Case::Linear => {
                let n = rng.random_range(1..=2);
                let input = rng.random_range(1..=3 * 8 * 8);
                let out = rng.random_range(1..=4);
                let spec = LayerSpec::Linear {
                    in_features: input,
                    out_features: out,
                };
                check_layer(layer(spec), random_tensor(&[n, input], rng), rng)
            }
            Case::Flatten => {
                let s = shape(rng, false);
                check_layer(layer(LayerSpec::Flatten), random_tensor(&s, rng), rng)
            }
            Case::Dropout => {
                let s = shape(rng, false);
                let p = [0.25, 0.5, 0.75][rng.random_range(0..3)];
                check_layer(layer(LayerSpec::Dropout { p }), random_tensor(&s, rng), rng)
            }
            Case::Softmax => {
                let shape = [rng.random_range(1..=2), rng.random_range(2..=5)];
                check_layer(layer(LayerSpec::Softmax), random_tensor(&shape, rng), rng)
            }
            Case::SoftmaxCrossEntropy => {
                let (n, k) = (rng.random_range(1..=4), rng.random_range(2..=5));
                let logits = random_tensor(&[n, k], rng).scale(3.0);
                let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
                let (_, grad) = softmax_cross_entropy(&logits, &labels, Reduction::Mean).unwrap();
                let loss =
                    |t: &Tensor<f64>| softmax_cross_entropy(t, &labels, Reduction::Mean).unwrap().0.loss;
                let numeric: Vec<f64> = (0..logits.len())
                    .map(|i| {
                        let mut up = logits.clone();
                        up.data_mut()[i] += H;
                        let mut down = logits.clone();
                        down.data_mut()[i] -= H;
                        (loss(&up) - loss(&down)) / (2.0 * H)
                    })
                    .collect();
                rel_error(grad.data(), &numeric)
            }
        }
    }

    /// Worst relative error over `TRIALS` random instances.
    pub fn worst(self, seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..TRIALS).map(|_| self.one(&mut rng)).fold(0.0, f64::max)
    }
}

/// Chain rule through a tiny vgg-mini on a sample of parameters. Thousands
/// of ReLU and max-pool units sit between the first layers and the loss, so
/// the step is kept small enough that none of them switches.
pub fn whole_network_error(seed: u64) -> f64 {
    const H: f64 = 1e-6;
    let cfg = ModelConfig::vgg_mini(WidthMultiplier::new(1, 16).unwrap(), (32, 32), 2);
    let mut model: Model<f64> = Model::build(&cfg).unwrap();
    model.init_he_uniform(seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = random_tensor(&[2, 3, 32, 32], &mut rng).map(|v| (v + 1.0) / 2.0);
    let labels = [0usize, 1];
    let loss = |model: &mut Model<f64>| {
        model.set_dropout_seed(5);
        let logits = model.forward(&x, Mode::Train).unwrap();
        softmax_cross_entropy(&logits, &labels, Reduction::Mean).unwrap()
    };
    let (_, g) = loss(&mut model);
    model.backward(&g).unwrap();
    let analytic: Vec<Vec<f64>> = model
        .named_params()
        .iter()
        .map(|(_, p)| p.grad().unwrap().data().to_vec())
        .collect();

    let (mut a, mut n) = (Vec::new(), Vec::new());
    for (pi, grads) in analytic.iter().enumerate() {
        for _ in 0..4 {
            let i = rng.random_range(0..grads.len());
            let orig = model.named_params()[pi].1.value.data()[i];
            model.named_params_mut()[pi].1.value.data_mut()[i] = orig + H;
            let up = loss(&mut model).0.loss;
            model.named_params_mut()[pi].1.value.data_mut()[i] = orig - H;
            let down = loss(&mut model).0.loss;
            model.named_params_mut()[pi].1.value.data_mut()[i] = orig;
            a.push(grads[i]);
            n.push((up - down) / (2.0 * H));
        }
    }
    rel_error(&a, &n)
}
