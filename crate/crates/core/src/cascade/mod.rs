//! Joining a src→piv model and a piv→trg model into one network, and
//! checkpoint files.

mod checkpoint;
mod integrated;

pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint};
pub use integrated::{
    concatenate, group_of, hard_posteriors, resolve_lengths, InitScheme, IntegratedArch,
    IntegratedEncoding, IntegratedInput, IntegratedModel, InterfaceKind, LengthPolicy,
};
