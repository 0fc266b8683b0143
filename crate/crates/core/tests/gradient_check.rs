//! Analytic backward passes against central finite differences in f64.

mod common;

use common::gradcheck::{whole_network_error, Case, TOL};

fn check(case: Case, seed: u64) {
    let err = case.worst(seed);
    assert!(err < TOL, "{}: relative error {err:e}", case.name());
}

#[test]
fn conv3x3() {
    check(Case::Conv3x3, 1);
}

#[test]
fn conv_strided_and_unpadded() {
    check(Case::ConvOther, 2);
}

#[test]
fn relu() {
    check(Case::Relu, 3);
}

#[test]
fn maxpool_2x2() {
    check(Case::MaxPool, 4);
}

#[test]
fn adaptive_avgpool() {
    check(Case::AvgPool, 5);
}

#[test]
fn linear() {
    check(Case::Linear, 6);
}

#[test]
fn flatten() {
    check(Case::Flatten, 7);
}

#[test]
fn dropout_with_fixed_mask() {
    check(Case::Dropout, 8);
}

#[test]
fn softmax() {
    check(Case::Softmax, 9);
}

#[test]
fn fused_softmax_cross_entropy() {
    let err = Case::SoftmaxCrossEntropy.worst(10);
    assert!(err < 1e-6, "fused gradient relative error {err:e}");
}

#[test]
fn whole_network_sampled() {
    let err = whole_network_error(11);
    assert!(err < TOL, "network relative error {err:e}");
}
