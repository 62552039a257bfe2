mod common;

use common::*;

fn assert_case(name: &str, case: Case) {
    let worst = worst_error(case);
    assert!(worst < TOLERANCE, "{name}: max relative error {worst:e}");
}

#[test]
fn conv1d_gradients() {
    assert_case("conv1d", conv1d);
}

#[test]
fn conv2d_gradients() {
    assert_case("conv2d", conv2d);
}

#[test]
fn maxpool_gradients() {
    assert_case("maxpool", maxpool);
}

#[test]
fn deconv1d_gradients() {
    assert_case("deconv1d", deconv1d);
}

#[test]
fn dense_gradients() {
    assert_case("dense", dense);
}

#[test]
fn gru_gradients() {
    assert_case("gru", gru);
}

#[test]
fn attention_gradients() {
    assert_case("attention", attention);
}

#[test]
fn softmax_gradients() {
    assert_case("softmax", softmax);
}

#[test]
fn weighted_bce_gradients() {
    assert_case("weighted_bce", weighted_bce);
}

#[test]
fn every_case_checks_some_entries() {
    for (name, case) in CASES {
        assert!(case(0).entries > 0, "{name}");
    }
}
