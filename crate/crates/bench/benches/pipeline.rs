//! Criterion benchmarks for the pipeline hot paths: sample construction,
//! training steps, k-means iterations and the alignment DP.

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use std::hint::black_box;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sc2t_core::cluster::kmeans_pp;
use sc2t_core::context::build_samples;
use sc2t_core::grid::{tokenize_document, CharCodec};
use sc2t_core::model::{build_model, Sc2tConfig, TrainOptions};
use sc2t_core::realign::align_line;
use sc2t_core::Tensor;

fn invoice_text(lines: usize) -> String {
    (0..lines)
        .map(|i| {
            format!(
                "5363{:02} 85{:03}A GLASS_STAR_FROSTED_T-LIGHT {} 12/1/2011_8:26 {}.55 178{:02} United_Kingdom\n",
                i % 100,
                i % 1000,
                1 + i % 48,
                2 + i % 7,
                i % 100
            )
        })
        .collect()
}

fn bench_tokenize_and_samples(c: &mut Criterion) {
    let text = invoice_text(500);
    let codec = CharCodec::default();
    let cfg = Sc2tConfig::default();
    c.bench_function("tokenize_500_lines", |b| {
        b.iter(|| black_box(tokenize_document(black_box(&text))))
    });
    let grid = tokenize_document(&text);
    c.bench_function("build_samples_4k_tokens", |b| {
        b.iter(|| black_box(build_samples(black_box(&grid), &codec, &cfg.window()).unwrap()))
    });
}

fn bench_train_epoch(c: &mut Criterion) {
    let cfg = Sc2tConfig {
        s_e: 16,
        ch_e: 16,
        l_t: 12,
        h_w: 5,
        v_w: 3,
        n_f: 16,
        char_fc_units: 8,
        ..Sc2tConfig::default()
    };
    let codec = CharCodec::default();
    let text = invoice_text(40);
    let samples = build_samples(&tokenize_document(&text), &codec, &cfg.window()).unwrap();
    c.bench_function("train_epoch_320_tokens_small_model", |b| {
        b.iter_batched(
            || build_model(&cfg).unwrap(),
            |mut model| {
                let report = model
                    .train(
                        &samples,
                        &TrainOptions {
                            epochs: 1,
                            batch_size: 64,
                            lr: 1e-3,
                            seed: 3,
                        },
                    )
                    .unwrap();
                black_box(report.epoch_loss[0])
            },
            BatchSize::SmallInput,
        )
    });
}

fn bench_kmeans(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let n = 5_000;
    let d = 100;
    let data: Vec<f64> = (0..n * d).map(|_| rng.random::<f64>()).collect();
    let points = Tensor::from_vec(&[n, d], data).unwrap();
    c.bench_function("kmeans_pp_5k_points_k20", |b| {
        let mut seed = 0;
        b.iter(|| {
            seed += 1;
            black_box(kmeans_pp(black_box(&points), 20, seed).unwrap())
        })
    });
}

fn bench_align(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let emb = |n: usize, rng: &mut ChaCha8Rng| -> Vec<Vec<f64>> {
        (0..n)
            .map(|_| (0..100).map(|_| rng.random::<f64>()).collect())
            .collect()
    };
    let reference = emb(8, &mut rng);
    let line = emb(5, &mut rng);
    c.bench_function("align_line_5_of_8", |b| {
        b.iter(|| black_box(align_line(black_box(&line), black_box(&reference)).unwrap()))
    });
}

criterion_group!(
    benches,
    bench_tokenize_and_samples,
    bench_train_epoch,
    bench_kmeans,
    bench_align
);
criterion_main!(benches);
