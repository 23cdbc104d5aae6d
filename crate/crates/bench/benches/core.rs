use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};

use mobmix::eval::predict_transitions;
use mobmix::experiment::{binned_transitions, overlap_scores, train_models};
use mobmix::overlap::lcst;
use mobmix_bench::split;

fn bench_lcst(c: &mut Criterion) {
    let mut group = c.benchmark_group("lcst");
    for n in [8usize, 32, 128] {
        let a: Vec<u32> = (0..n as u32).map(|i| (i * 7) % 11).collect();
        let b: Vec<u32> = (0..n as u32).map(|i| (i * 5) % 11).collect();
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |bench, _| bench.iter(|| lcst(black_box(&a), black_box(&b))));
    }
    group.finish();
}

fn bench_training(c: &mut Criterion) {
    let s = split(200, 60);
    c.bench_function("train_models/200_users", |b| b.iter(|| train_models(black_box(&s.train)).unwrap()));
    c.bench_function("overlap_scores/200_users", |b| b.iter(|| overlap_scores(black_box(&s))));
}

fn bench_prediction(c: &mut Criterion) {
    let s = split(200, 60);
    let trained = train_models(&s.train).unwrap();
    let transitions = binned_transitions(&s, &overlap_scores(&s));
    c.bench_function("predict_transitions/acc@5", |b| {
        b.iter(|| predict_transitions(black_box(&trained.models), black_box(&transitions), 5).unwrap())
    });
}

criterion_group!(benches, bench_lcst, bench_training, bench_prediction);
criterion_main!(benches);
