//! Vocabularies, parallel corpora and synthetic pivot tasks.

mod corpus;
mod synthetic;
mod vocab;

pub use corpus::{partition_corpus, partition_rows, read_lines, write_lines, ParallelCorpus};
pub use synthetic::{
    make_synthetic_task, side_label, Side, SyntheticTask, TaskKey, TaskKind, TaskSpec,
};
pub use vocab::{build_vocab, is_special, Vocabulary, BOS, EOS, MASK, PAD, SPECIALS, UNK};
