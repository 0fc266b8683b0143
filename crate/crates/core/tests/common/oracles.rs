//! Direct-loop reference implementations of the convolution and pooling
//! kernels, evaluated in f64.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vggfire::layers::{Conv2d, Layer, LayerSpec};
use vggfire::tensor::{ConvGeometry, Tensor};

pub const CASES: usize = 50;
pub const TOL: f64 = 1e-5;

fn rel_error(got: &Tensor<f32>, want: &[f64]) -> f64 {
    assert_eq!(got.len(), want.len(), "output sizes differ");
    let diff: f64 = got
        .data()
        .iter()
        .zip(want)
        .map(|(&a, &b)| (a as f64 - b).powi(2))
        .sum::<f64>()
        .sqrt();
    let norm: f64 = want.iter().map(|b| b * b).sum::<f64>().sqrt();
    if norm == 0.0 {
        diff
    } else {
        diff / norm
    }
}

fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f32> {
    Tensor::from_fn(shape, |_| rng.random_range(-1.0f32..1.0))
}

pub fn direct_conv(
    x: &Tensor<f32>,
    w: &Tensor<f32>,
    b: &Tensor<f32>,
    k: usize,
    s: usize,
    p: usize,
) -> (Vec<usize>, Vec<f64>) {
    let (n, c, h, wd) = x.dims4().unwrap();
    let co = w.shape()[0];
    let ho = (h + 2 * p - k) / s + 1;
    let wo = (wd + 2 * p - k) / s + 1;
    let mut out = Vec::with_capacity(n * co * ho * wo);
    for ni in 0..n {
        for o in 0..co {
            for i in 0..ho {
                for j in 0..wo {
                    let mut acc = b.data()[o] as f64;
                    for ci in 0..c {
                        for di in 0..k {
                            for dj in 0..k {
                                let y = (i * s + di) as isize - p as isize;
                                let xx = (j * s + dj) as isize - p as isize;
                                if y < 0 || xx < 0 || y >= h as isize || xx >= wd as isize {
                                    continue;
                                }
                                let xv = x.get(&[ni, ci, y as usize, xx as usize]).unwrap() as f64;
                                let wv = w.get(&[o, ci, di, dj]).unwrap() as f64;
                                acc += xv * wv;
                            }
                        }
                    }
                    out.push(acc);
                }
            }
        }
    }
    (vec![n, co, ho, wo], out)
}

/// Relative error of one random convolution against the direct loop.
pub fn conv_case(rng: &mut ChaCha8Rng) -> f64 {
    loop {
        let (k, s, p) = (
            rng.random_range(1..=3),
            rng.random_range(1..=2),
            rng.random_range(0..=1),
        );
        let shape = [
            rng.random_range(1..=3),
            rng.random_range(1..=8),
            rng.random_range(3..=16),
            rng.random_range(3..=16),
        ];
        let g = ConvGeometry::square(k, s, p);
        if g.output_dims(shape[2], shape[3]).is_err() {
            continue;
        }
        let co = rng.random_range(1..=8);
        let mut conv = Conv2d::<f32>::new(shape[1], co, g);
        conv.weight.value = random(&[co, shape[1], k, k], rng);
        conv.bias.value = random(&[co], rng);
        let x = random(&shape, rng);
        let got = conv.infer(&x).unwrap();
        let (want_shape, want) = direct_conv(&x, &conv.weight.value, &conv.bias.value, k, s, p);
        assert_eq!(got.shape(), &want_shape[..]);
        return rel_error(&got, &want);
    }
}

pub fn maxpool_case(rng: &mut ChaCha8Rng) -> f64 {
    let (k, s) = [(2, 2), (3, 1), (3, 2)][rng.random_range(0..3)];
    let side = |rng: &mut ChaCha8Rng| match (k, s) {
        (2, 2) => 2 * rng.random_range(1..=8),
        (3, 2) => 2 * rng.random_range(1..=7) + 1,
        _ => rng.random_range(3..=16),
    };
    let shape = [
        rng.random_range(1..=3),
        rng.random_range(1..=4),
        side(rng),
        side(rng),
    ];
    let x = random(&shape, rng);
    let got = Layer::<f32>::from_spec(&LayerSpec::MaxPool2d { kernel: k, stride: s })
        .unwrap()
        .infer(&x)
        .unwrap();
    let (ho, wo) = ((shape[2] - k) / s + 1, (shape[3] - k) / s + 1);
    let mut want = Vec::new();
    for ni in 0..shape[0] {
        for ci in 0..shape[1] {
            for i in 0..ho {
                for j in 0..wo {
                    let window = (0..k).flat_map(|di| (0..k).map(move |dj| (i * s + di, j * s + dj)));
                    let m = window
                        .map(|(y, xx)| x.get(&[ni, ci, y, xx]).unwrap() as f64)
                        .fold(f64::NEG_INFINITY, f64::max);
                    want.push(m);
                }
            }
        }
    }
    assert_eq!(got.shape(), &[shape[0], shape[1], ho, wo]);
    rel_error(&got, &want)
}

pub fn avgpool_case(rng: &mut ChaCha8Rng) -> f64 {
    let shape = [
        rng.random_range(1..=3),
        rng.random_range(1..=4),
        rng.random_range(1..=16),
        rng.random_range(1..=16),
    ];
    let out = (rng.random_range(1..=shape[2]), rng.random_range(1..=shape[3]));
    let x = random(&shape, rng);
    let got = Layer::<f32>::from_spec(&LayerSpec::AdaptiveAvgPool2d { output: out })
        .unwrap()
        .infer(&x)
        .unwrap();
    // region i covers [floor(i·n/o), ceil((i+1)·n/o))
    let bounds = |i: usize, n: usize, o: usize| {
        let lo = (i as f64 * n as f64 / o as f64).floor() as usize;
        let hi = ((i + 1) as f64 * n as f64 / o as f64).ceil() as usize;
        lo..hi
    };
    let mut want = Vec::new();
    for ni in 0..shape[0] {
        for ci in 0..shape[1] {
            for i in 0..out.0 {
                for j in 0..out.1 {
                    let (mut sum, mut count) = (0.0, 0usize);
                    for y in bounds(i, shape[2], out.0) {
                        for xx in bounds(j, shape[3], out.1) {
                            sum += x.get(&[ni, ci, y, xx]).unwrap() as f64;
                            count += 1;
                        }
                    }
                    want.push(sum / count as f64);
                }
            }
        }
    }
    assert_eq!(got.shape(), &[shape[0], shape[1], out.0, out.1]);
    rel_error(&got, &want)
}

/// Worst error over `CASES` seeded instances.
pub fn worst(case: fn(&mut ChaCha8Rng) -> f64, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..CASES).map(|_| case(&mut rng)).fold(0.0, f64::max)
}
