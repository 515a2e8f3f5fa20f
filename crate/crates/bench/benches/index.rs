use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, BenchmarkId, Criterion, Throughput};
use diffuse_bench::populated_index;
use diffuse_core::{ExecutorId, IndexUpdate, ObjectId};

const EXECUTORS: u32 = 128;

fn lookups(c: &mut Criterion) {
    let mut group = c.benchmark_group("index/locate");
    for entries in [10_000u32, 1_000_000] {
        let index = populated_index(entries, EXECUTORS);
        group.throughput(Throughput::Elements(1024));
        group.bench_with_input(BenchmarkId::from_parameter(entries), &entries, |b, &n| {
            // stride through the key space so lookups do not stay in one cache line
            let mut key = 0u32;
            b.iter(|| {
                let mut found = 0usize;
                for _ in 0..1024 {
                    key = key.wrapping_add(7919) % n;
                    found += index.locate(ObjectId(key)).len();
                }
                black_box(found)
            });
        });
    }
    group.finish();
}

fn inserts(c: &mut Criterion) {
    let mut group = c.benchmark_group("index/insert");
    group.throughput(Throughput::Elements(10_000));
    group.bench_function("into_1m", |b| {
        b.iter_batched(
            || populated_index(1_000_000, EXECUTORS),
            |mut index| {
                for i in 0..10_000u32 {
                    index.add_location(ObjectId(1_000_000 + i), ExecutorId(i % EXECUTORS));
                }
                index
            },
            BatchSize::LargeInput,
        );
    });
    group.finish();
}

fn batched_flush(c: &mut Criterion) {
    let mut group = c.benchmark_group("index/flush");
    group.throughput(Throughput::Elements(4096));
    group.bench_function("4096_updates", |b| {
        b.iter_batched(
            || {
                let mut index = diffuse_core::LocationIndex::new(1.0);
                for i in 0..4096u32 {
                    index.enqueue(ExecutorId(i % EXECUTORS), IndexUpdate::Add(ObjectId(i)));
                }
                index
            },
            |mut index| {
                black_box(index.apply_all());
                index
            },
            BatchSize::SmallInput,
        );
    });
    group.finish();
}

criterion_group!(benches, lookups, inserts, batched_flush);
criterion_main!(benches);
