mod common;

use common::*;
use crelu_core::nn::ActivationKind;

fn assert_check(r: CheckResult) {
    assert!(r.passed(), "{}: worst relative error {:.3e} over {} instances", r.name, r.worst, r.instances);
}

#[test]
fn relu() {
    assert_check(check_activation(ActivationKind::Relu));
}

#[test]
fn crelu() {
    assert_check(check_activation(ActivationKind::Crelu));
}

#[test]
fn avr() {
    assert_check(check_activation(ActivationKind::Avr));
}

#[test]
fn leaky_relu() {
    assert_check(check_activation(ActivationKind::LeakyRelu(0.2)));
}

#[test]
fn conv2d() {
    assert_check(check_conv());
}

#[test]
fn dense() {
    assert_check(check_dense());
}

#[test]
fn maxpool() {
    assert_check(check_maxpool());
}

#[test]
fn avgpool() {
    assert_check(check_avgpool());
}

#[test]
fn global_avgpool() {
    assert_check(check_global_avgpool());
}

#[test]
fn dropout() {
    assert_check(check_dropout());
}

#[test]
fn softmax_xent() {
    assert_check(check_softmax_xent());
}

#[test]
fn composite_network() {
    assert_check(check_composite());
}

#[test]
fn relative_error_detects_a_wrong_gradient() {
    let numeric = numeric_gradient(&[1.0, 2.0], |v| (v[0] * v[0] + 3.0 * v[1], ()));
    assert!(compare(&[2.0, 3.0], &numeric) < 1e-9);
    assert!(compare(&[2.0, 3.3], &numeric) > 1e-2);
}
