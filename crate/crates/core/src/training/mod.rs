//! Optimisation: schedules, Adam, token batching, metrics and the training
//! recipes for each model family.

mod batching;
mod config;
mod generate;
mod metrics;
mod optim;
mod recipes;

pub use batching::token_batches;
pub use config::{lr_schedule, TrainConfig};
pub use metrics::{MetricsLog, MetricsRecord, CSV_HEADER};
pub use optim::{adam_step, AdamState};
pub use recipes::{
    ar_batch_loss, eval_ar, eval_integrated, eval_nat, finetune_integrated, integrated_batch_loss,
    max_decode_len, nat_batch_loss, pretrain_ar, pretrain_nat, sample_mask, DevSet, Pairs,
    TrainOutcome,
};

pub use generate::{
    decode_corpus, distill_corpus, generate_synthetic_pivots, DecodedCorpus, PLACEHOLDER,
};
