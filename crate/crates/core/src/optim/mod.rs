//! Softmax cross-entropy loss and the Adam optimizer.

mod adam;
mod loss;

pub use adam::{Adam, AdamConfig};
pub use loss::{cross_entropy, softmax_ce_backward, softmax_cross_entropy, LossValue, Reduction, PROB_FLOOR};
