use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand_distr::{Distribution, StandardNormal};

use synthvqa::align::{permutation_test, KernelConfig, Matrix};
use synthvqa::compositor::{generate_scene, render_masks_with, SceneContext};
use synthvqa::{rng, Exec};

const MODES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn gaussian(n: usize, dim: usize, shift: f64, seed: u64) -> Matrix {
    let mut r = rng::stream(seed, "bench", 0);
    let data = (0..n * dim)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut r);
            z + shift
        })
        .collect();
    Matrix::from_vec(n, dim, data).unwrap()
}

fn scenes(c: &mut Criterion) {
    let ctx = SceneContext::shipped();
    let ids = ctx.templates.ids();
    let mut g = c.benchmark_group("generate_16_scenes");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| {
                exec.map_range(16, |i| {
                    let s = generate_scene(&ctx, ids[i % ids.len()], &format!("b{i}"), i as u64);
                    s.map(|s| s.placed.objects.len()).unwrap_or(0)
                })
            })
        });
    }
    g.finish();
}

fn masks(c: &mut Criterion) {
    let ctx = SceneContext::shipped();
    let scene = generate_scene(&ctx, "table-with-small-objects", "b", 1).unwrap().placed;
    let mut g = c.benchmark_group("render_masks");
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| b.iter(|| render_masks_with(black_box(&scene), exec).unwrap()));
    }
    g.finish();
}

fn permutations(c: &mut Criterion) {
    let x = gaussian(200, 8, 0.0, 1);
    let y = gaussian(200, 8, 0.5, 2);
    let k = KernelConfig::default();
    let mut g = c.benchmark_group("mmd_permutation_test_50");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| permutation_test(&x, &y, &k, 50, 0.99, 3, exec).unwrap().p_value)
        });
    }
    g.finish();
}

criterion_group!(benches, scenes, masks, permutations);
criterion_main!(benches);
