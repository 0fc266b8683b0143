//! Independent checks for the evaluation metrics.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vggfire::data::Label;

pub const FIRE_SUPPORT: usize = 2301;
pub const NO_FIRE_SUPPORT: usize = 2005;

/// Every (tp, fp, fn, tn) with the given class supports whose accuracy,
/// precision and recall round to the reported six-decimal values.
pub fn matrices_matching_reported() -> Vec<(usize, usize, usize, usize)> {
    let total = (FIRE_SUPPORT + NO_FIRE_SUPPORT) as f64;
    let close = |v: f64, target: f64| (v - target).abs() <= 5e-7;
    let mut found = Vec::new();
    for tp in 0..=FIRE_SUPPORT {
        let fn_ = FIRE_SUPPORT - tp;
        if !close(tp as f64 / FIRE_SUPPORT as f64, 0.986093) {
            continue;
        }
        for fp in 0..=NO_FIRE_SUPPORT {
            let tn = NO_FIRE_SUPPORT - fp;
            if tp + fp > 0
                && close((tp + tn) as f64 / total, 0.975615)
                && close(tp as f64 / (tp + fp) as f64, 0.968830)
            {
                found.push((tp, fp, fn_, tn));
            }
        }
    }
    found
}

/// Probability that a random positive outscores a random negative, ties ½.
pub fn mann_whitney(scores: &[f64], truth: &[Label]) -> f64 {
    let (mut u, mut pairs) = (0.0, 0usize);
    for (i, &ti) in truth.iter().enumerate() {
        if ti != Label::Fire {
            continue;
        }
        for (j, &tj) in truth.iter().enumerate() {
            if tj != Label::NoFire {
                continue;
            }
            pairs += 1;
            if scores[i] > scores[j] {
                u += 1.0;
            } else if scores[i] == scores[j] {
                u += 0.5;
            }
        }
    }
    u / pairs as f64
}

/// 20 samples with both classes present; scores on a coarse grid so ties
/// are common.
pub fn random_instance(rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<Label>) {
    loop {
        let truth: Vec<Label> = (0..20)
            .map(|_| {
                if rng.random_bool(0.5) {
                    Label::Fire
                } else {
                    Label::NoFire
                }
            })
            .collect();
        if truth.contains(&Label::Fire) && truth.contains(&Label::NoFire) {
            let scores = (0..20).map(|_| rng.random_range(0..8) as f64 / 7.0).collect();
            return (scores, truth);
        }
    }
}

/// Largest |trapezoid − Mann-Whitney| over `cases` random instances.
pub fn worst_auc_gap(seed: u64, cases: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..cases)
        .map(|_| {
            let (scores, truth) = random_instance(&mut rng);
            let auc = vggfire::metrics::roc_auc(&scores, &truth).unwrap().auc;
            (auc - mann_whitney(&scores, &truth)).abs()
        })
        .fold(0.0, f64::max)
}
