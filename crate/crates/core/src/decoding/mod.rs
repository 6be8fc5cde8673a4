//! Beam search, mask-predict, two-pass cascades and integrated decoding.

mod beam;
mod mask_predict;
mod pipeline;

pub use beam::{
    beam_search, greedy_rollout, ArScorer, BeamConfig, Hypothesis, NBestList, StepScorer,
};
pub use mask_predict::{
    mask_predict, mask_predict_batch, mask_predict_on, remask_count, MaskPredictState,
};
pub use pipeline::{
    decode_ar, decode_integrated, decode_pivots, nat_lengths, remap_ids, two_pass_decode,
    two_pass_decode_batch, IntegratedDecodeConfig, PivotDecoder, Stage, TwoPassConfig,
};
