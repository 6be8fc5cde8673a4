//! Transformer building blocks: encoder, causal and bidirectional decoders,
//! and the length-prediction head.

mod config;
mod model;
mod params;

pub use config::TransformerConfig;
pub use model::{
    init_tensor, positional_encoding, DecoderKind, DecoderOutput, EncoderOutput, TokenBatch,
    Transformer,
};
pub use params::{Bound, ParamStore, ParamView};
