#![allow(clippy::needless_range_loop)]

mod common;

use common::{grad, FD_TOL};

fn assert_suite(name: &str, worst: f64) {
    assert!(worst < FD_TOL, "{name}: worst relative error {worst:e}");
}

#[test]
fn linear() {
    assert_suite("linear", grad::linear(11));
}

#[test]
fn layer_norm() {
    assert_suite("layer_norm", grad::layer_norm(12));
}

#[test]
fn dropout_inference_and_fixed_mask() {
    assert_suite("dropout", grad::dropout_paths(13));
}

#[test]
fn gelu() {
    assert_suite("gelu", grad::gelu_op(14));
}

#[test]
fn softmax_cross_entropy() {
    assert_suite("softmax+ce", grad::softmax_ce(15));
}

#[test]
fn moe_head_end_to_end() {
    assert_suite("moe", grad::moe_head(16));
}

#[test]
fn gated_fusion_end_to_end() {
    assert_suite("gated", grad::gated_fusion(17));
}

#[test]
fn concat_linear_end_to_end() {
    assert_suite("concat-linear", grad::concat_linear(18));
}

#[test]
fn concat_mlp_end_to_end() {
    assert_suite("concat-mlp", grad::concat_mlp(19));
}
