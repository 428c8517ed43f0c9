use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use paint_core::nn::{random_batch, Activation, Mlp};
use paint_core::rng::{stream, Stream};
use std::hint::black_box;

fn mlp(c: &mut Criterion) {
    let mut rng = stream(0, Stream::Init);
    let x = random_batch(256, 22, &mut rng);
    let grad = random_batch(256, 1, &mut rng);
    let mut group = c.benchmark_group("mlp");
    for width in [64, 256] {
        let net = Mlp::new(&[22, width, width, 1], Activation::Relu, Activation::Identity, 1.0, 1);
        group.bench_with_input(BenchmarkId::new("forward", width), &net, |b, net| {
            b.iter(|| net.forward(black_box(&x)).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("forward_backward", width), &net, |b, net| {
            b.iter(|| {
                let cache = net.forward_cached(black_box(&x)).unwrap();
                net.backward(&cache, &grad)
            })
        });
    }
    group.finish();
}

criterion_group!(benches, mlp);
criterion_main!(benches);
