mod common;

use common::*;
use harssl::encoder::{ConvBlock, EncoderConfig};

fn assert_passes(what: &str, r: GradCheck) {
    assert!(r.worst < TOLERANCE, "{what}: relative error {:e}", r.worst);
    assert!(r.checked > 0 && r.skipped * 20 <= r.checked, "{what}: {} of {} skipped on kinks", r.skipped, r.checked + r.skipped);
}

#[test]
fn every_layer_kind_matches_finite_differences() {
    for (name, net, shape) in layer_cases() {
        for seed in 0..5 {
            assert_passes(&format!("{name} seed {seed}"), check_layer_stack(&net, &shape, seed));
        }
    }
}

#[test]
fn small_encoder_and_projector() {
    let cfg = EncoderConfig {
        window_len: 40,
        blocks: vec![ConvBlock { kernel: 5, channels: 4, pool: 2 }, ConvBlock { kernel: 3, channels: 6, pool: 2 }],
        embedding_dim: 8,
        projector_hidden: 6,
        ..EncoderConfig::default()
    };
    for seed in 0..3 {
        assert_passes(&format!("seed {seed}"), check_encoder_projector(&cfg, 3, seed));
    }
}

#[test]
fn default_encoder_and_projector() {
    assert_passes("default tower", check_encoder_projector(&EncoderConfig::default(), 2, 11));
}

#[test]
fn head_mlp() {
    for seed in 0..3 {
        assert_passes(&format!("seed {seed}"), check_head(12, 10, 5, 4, seed));
    }
}
