use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layers::softmax_rows;
use crate::tensor::{Element, Tensor};

/// Probabilities are clamped to at least this value before taking the log.
pub const PROB_FLOOR: f64 = 1e-12;

/// How per-sample losses are combined over a batch.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Reduction {
    #[default]
    Mean,
    Sum,
}

impl Reduction {
    fn divisor(self, n: usize) -> f64 {
        match self {
            Reduction::Mean => n as f64,
            Reduction::Sum => 1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossValue {
    pub loss: f64,
    pub batch_size: usize,
}

fn check_labels(k: usize, n: usize, labels: &[usize]) -> Result<()> {
    if labels.len() != n {
        return Err(Error::input(format!(
            "{} labels for a batch of {n}",
            labels.len()
        )));
    }
    if let Some(bad) = labels.iter().find(|&&l| l >= k) {
        return Err(Error::input(format!("label {bad} out of range for {k} classes")));
    }
    Ok(())
}

/// `-log p[i, label_i]`, reduced over the batch.
pub fn cross_entropy<T: Element>(
    probs: &Tensor<T>,
    labels: &[usize],
    reduction: Reduction,
) -> Result<LossValue> {
    let (n, k) = probs.dims2()?;
    check_labels(k, n, labels)?;
    let total: f64 = probs
        .data()
        .chunks_exact(k)
        .zip(labels)
        .map(|(row, &l)| {
            let p = row[l].as_f64();
            -if p.is_nan() { p } else { p.max(PROB_FLOOR) }.ln()
        })
        .sum();
    Ok(LossValue {
        loss: total / reduction.divisor(n),
        batch_size: n,
    })
}

/// Gradient of `cross_entropy(softmax(logits))` w.r.t. the logits:
/// `(softmax(logits) - onehot(labels)) / N` for the mean reduction.
pub fn softmax_ce_backward<T: Element>(
    logits: &Tensor<T>,
    labels: &[usize],
    reduction: Reduction,
) -> Result<Tensor<T>> {
    Ok(softmax_cross_entropy(logits, labels, reduction)?.1)
}

/// Loss and logit gradient in one pass.
pub fn softmax_cross_entropy<T: Element>(
    logits: &Tensor<T>,
    labels: &[usize],
    reduction: Reduction,
) -> Result<(LossValue, Tensor<T>)> {
    let (n, k) = logits.dims2()?;
    check_labels(k, n, labels)?;
    let probs = softmax_rows(logits)?;
    let loss = cross_entropy(&probs, labels, reduction)?;
    let scale = T::from_f64(1.0 / reduction.divisor(n));
    let mut grad = probs;
    for (row, &l) in grad.data_mut().chunks_exact_mut(k).zip(labels) {
        row[l] -= T::one();
        row.iter_mut().for_each(|g| *g *= scale);
    }
    Ok((loss, grad))
}
