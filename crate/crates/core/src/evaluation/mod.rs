//! Scoring and error-propagation analysis.

mod bleu;
mod noise;
mod sweeps;

pub use bleu::{corpus_bleu, sentence_bleu, BleuReport, MAX_ORDER};
pub use noise::{char_noise, noise_lines, oracle_select};
pub use sweeps::{
    error_propagation_sweep, study_sweeps, PropagationSpec, StudyKind, StudySpec, SweepResult,
    SweepRow, ThreeWaySet, DATA_FRACTIONS, SWEEP_HEADER,
};
