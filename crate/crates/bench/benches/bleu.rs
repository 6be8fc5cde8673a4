use cascade_core::evaluation::corpus_bleu;
use criterion::{criterion_group, criterion_main, Criterion};

fn corpus(n: usize, shift: usize) -> Vec<String> {
    (0..n)
        .map(|i| {
            (0..20)
                .map(|j| format!("w{}", (i * 7 + j * 3 + shift * (j % 4)) % 50))
                .collect::<Vec<_>>()
                .join(" ")
        })
        .collect()
}

fn bleu(c: &mut Criterion) {
    let (hyp, refs) = (corpus(1000, 1), corpus(1000, 0));
    c.bench_function("corpus_bleu/1000x20", |b| {
        b.iter(|| corpus_bleu(&hyp, &refs).unwrap())
    });
}

criterion_group!(benches, bleu);
criterion_main!(benches);
