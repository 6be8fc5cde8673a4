//! Shared fixtures for the benchmarks.

use cascade_core::nnet::{DecoderKind, ParamStore, Transformer, TransformerConfig};
use cascade_core::Tensor;

/// Deterministic pseudo-random tensor in `[-1, 1)`.
pub fn filled(shape: &[usize], seed: u64) -> Tensor<f32> {
    let mut s = seed
        .wrapping_mul(6364136223846793005)
        .wrapping_add(1442695040888963407);
    Tensor::from_fn(shape, |_| {
        s = s
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        ((s >> 40) as f32 / (1u64 << 24) as f32) * 2.0 - 1.0
    })
}

/// Toy-sized autoregressive model with random weights.
pub fn toy_model(vocab: usize) -> (Transformer, ParamStore<f32>) {
    let m = Transformer::new(
        TransformerConfig::toy(vocab, vocab),
        DecoderKind::Autoregressive,
    )
    .unwrap();
    let p = m.init_params(1);
    (m, p)
}
