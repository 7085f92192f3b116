use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use minerf_bench::{query_points, random_matrix, ray_samples};
use minerf_core::model::{Model, ModelConfig, Variant};
use minerf_core::render::{composite, CompositeOp};
use minerf_core::Tape;

fn gemm(c: &mut Criterion) {
    let mut group = c.benchmark_group("gemm");
    for n in [64usize, 256, 1024] {
        let a = random_matrix(n, 127, 1);
        let b = random_matrix(127, 64, 2);
        group.throughput(Throughput::Elements((2 * n * 127 * 64) as u64));
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |bench, _| {
            bench.iter(|| black_box(&a).matmul(black_box(&b)).unwrap())
        });
    }
    group.finish();
}

fn compositing(c: &mut Criterion) {
    let mut group = c.benchmark_group("composite");
    for n in [64usize, 256] {
        let s = ray_samples(n, 3);
        group.bench_with_input(BenchmarkId::new("forward", n), &n, |bench, _| {
            bench.iter(|| composite(black_box(&s), [1.0; 3]).unwrap())
        });
    }
    let (rays, n) = (256usize, 64usize);
    let samples: Vec<_> = (0..rays).map(|r| ray_samples(n, r as u64)).collect();
    let delta: Vec<f64> = samples.iter().flat_map(|s| s.delta.clone()).collect();
    let sigma = minerf_core::Matrix::from_fn(rays * n, 1, |i, _| samples[i / n].sigma[i % n]);
    let rgb = minerf_core::Matrix::from_fn(rays * n, 3, |i, c| samples[i / n].rgb[i % n][c]);
    group.bench_function("tape_256x64", |bench| {
        bench.iter(|| {
            let mut tape = Tape::new();
            let s = tape.param(sigma.clone()).unwrap();
            let c = tape.param(rgb.clone()).unwrap();
            let op = CompositeOp::new(n, delta.clone(), [1.0; 3]).unwrap();
            let out = op.apply(&mut tape, s, c).unwrap();
            let loss = tape.sum(out).unwrap();
            tape.backward(loss).unwrap();
        })
    });
    group.finish();
}

fn network(c: &mut Criterion) {
    let mut group = c.benchmark_group("network_8x64");
    let points = 1024;
    let (x, d) = query_points(points, 4);
    group.throughput(Throughput::Elements(points as u64));
    for variant in [Variant::Vanilla, Variant::Mi, Variant::Dual] {
        let model = Model::init(ModelConfig::for_variant(variant, 8, 64), 0).unwrap();
        group.bench_function(BenchmarkId::new("forward", format!("{variant:?}")), |bench| {
            bench.iter(|| model.query(black_box(&x), black_box(&d)).unwrap())
        });
        group.bench_function(BenchmarkId::new("forward_backward", format!("{variant:?}")), |bench| {
            bench.iter(|| {
                let mut tape = Tape::new();
                let nodes = model.params.register(&mut tape, true).unwrap();
                let (sigma, rgb) = model.forward(&mut tape, &nodes, &x, &d).unwrap();
                let a = tape.sum(sigma).unwrap();
                let b = tape.sum(rgb).unwrap();
                let loss = tape.add(a, b).unwrap();
                tape.backward(loss).unwrap();
            })
        });
    }
    group.finish();
}

criterion_group!(benches, gemm, compositing, network);
criterion_main!(benches);
