//! Shared fixtures for the criterion benches.

use glom_core::nn::{ConvGroup, NetworkConfig, NetworkParams, Tensor};
use glom_core::{Image, Stream};

/// Deterministic noise image.
pub fn noise_image(side: usize, seed: u64) -> Image {
    let mut rng = Stream::new(seed);
    let data: Vec<u8> = (0..side * side * 3).map(|_| rng.next_u64() as u8).collect();
    Image::new(side, side, 3, data).unwrap()
}

/// A small network for forward/backward benches: 32px input, two conv
/// groups, one hidden dense layer, baseline-eGFR aux input.
pub fn bench_net() -> (NetworkConfig, NetworkParams, Tensor) {
    let cfg = NetworkConfig {
        input_side: 32,
        input_channels: 3,
        conv_groups: vec![
            ConvGroup { filters: 8, convs: 1 },
            ConvGroup { filters: 16, convs: 1 },
        ],
        dense_widths: vec![32],
        aux_dim: 1,
        output_dim: 1,
    };
    let params = NetworkParams::init(&cfg, &mut Stream::new(3)).unwrap();
    let img = noise_image(32, 9);
    let input = glom_core::nn::image_to_tensor(&img);
    (cfg, params, input)
}
