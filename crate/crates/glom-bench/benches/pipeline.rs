use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use glom_bench::{bench_net, noise_image};
use glom_core::augment::{augment_chip, AugmentConfig};
use glom_core::nn::{backward_sample, forward_sample};
use glom_core::segment::otsu_threshold;
use glom_core::{downsample, Stream};

fn bench_forward_backward(c: &mut Criterion) {
    let (cfg, params, input) = bench_net();
    let aux = [0.3];
    c.bench_function("nn_forward_32px", |b| {
        b.iter(|| forward_sample(&cfg, &params, black_box(&input), &aux).unwrap())
    });
    let (pred, cache) = forward_sample(&cfg, &params, &input, &aux).unwrap();
    c.bench_function("nn_backward_32px", |b| {
        b.iter(|| backward_sample(&cfg, &params, black_box(&cache), 2.0 * (pred - 0.7)).unwrap())
    });
}

fn bench_augment(c: &mut Criterion) {
    let chip = noise_image(256, 5);
    let aug = AugmentConfig {
        crop_px: 100,
        ..AugmentConfig::default()
    };
    c.bench_function("augment_chip_256px", |b| {
        let mut rng = Stream::new(11);
        b.iter(|| augment_chip(black_box(&chip), &mut rng, &aug).unwrap())
    });
}

fn bench_raster(c: &mut Criterion) {
    let img = noise_image(1024, 7);
    c.bench_function("downsample_1024px_x2", |b| {
        b.iter(|| downsample(black_box(&img), 2).unwrap())
    });
    c.bench_function("otsu_1024px", |b| {
        b.iter(|| otsu_threshold(black_box(&img)).unwrap())
    });
}

criterion_group!(benches, bench_forward_backward, bench_augment, bench_raster);
criterion_main!(benches);
