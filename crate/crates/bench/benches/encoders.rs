use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use std::hint::black_box;

use randenc_bench::{corpus, encoder};
use randenc_core::encoders::{encode_batch, PadMode, SortMode};

fn encode_families(c: &mut Criterion) {
    let (table, sentences) = corpus(256, 100, 16);
    let mut group = c.benchmark_group("encode_256_sentences");
    group.throughput(Throughput::Elements(sentences.len() as u64));
    for family in ["boe", "borep", "randlstm", "esn"] {
        let enc = encoder(family, 512);
        group.bench_with_input(BenchmarkId::from_parameter(family), &enc, |b, enc| {
            b.iter(|| {
                encode_batch(
                    black_box(enc),
                    &table,
                    &sentences,
                    64,
                    SortMode::SortedByLength,
                    PadMode::Length,
                )
                .unwrap()
            })
        });
    }
    group.finish();
}

fn build_reservoir(c: &mut Criterion) {
    c.bench_function("build_esn_512", |b| {
        b.iter(|| black_box(encoder("esn", 512)))
    });
}

criterion_group!(benches, encode_families, build_reservoir);
criterion_main!(benches);
