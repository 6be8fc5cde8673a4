use crate::autodiff::Scalar;
use crate::cascade::LengthPolicy;
use crate::data::{BOS, EOS, UNK};
use crate::decoding::{decode_pivots, BeamConfig, PivotDecoder, Stage};
use crate::error::{Error, Result};
use crate::nnet::DecoderKind;

use super::recipes::{max_decode_len, Pairs};

/// Decoded output per source line; lines that failed hold a placeholder.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodedCorpus {
    /// Framed `[BOS .. EOS]` outputs.
    pub lines: Vec<Vec<usize>>,
    /// Indices of lines replaced by the placeholder.
    pub failed: Vec<usize>,
}

/// `[BOS, UNK, EOS]`.
pub const PLACEHOLDER: [usize; 3] = [BOS, UNK, EOS];

/// Best output of `stage` for every source line. Autoregressive models use
/// beam search of width `beam`; non-autoregressive ones mask-predict with
/// `iterations` and predicted lengths.
pub fn decode_corpus<T: Scalar>(
    stage: Stage<T>,
    srcs: &[Vec<usize>],
    beam: usize,
    iterations: usize,
) -> Result<DecodedCorpus> {
    if beam < 1 {
        return Err(Error::InvalidArgument("beam must be at least 1".into()));
    }
    let mut out = DecodedCorpus {
        lines: Vec::with_capacity(srcs.len()),
        failed: Vec::new(),
    };
    for (i, src) in srcs.iter().enumerate() {
        let decoder = match stage.model.kind {
            DecoderKind::Autoregressive => PivotDecoder::Beam(BeamConfig::new(
                beam,
                max_decode_len(src.len(), stage.model),
            )),
            DecoderKind::NonAutoregressive => PivotDecoder::MaskPredict {
                iterations,
                length: LengthPolicy::Predicted,
            },
        };
        match decode_pivots(stage, std::slice::from_ref(src), &decoder, None, 0) {
            Ok(h) => out.lines.push(h[0].framed()),
            Err(e) => {
                log::warn!("line {i}: decoding failed ({e}); placeholder written");
                out.failed.push(i);
                out.lines.push(PLACEHOLDER.to_vec());
            }
        }
    }
    Ok(out)
}

/// Pivot hypotheses for fine-tuning an integrated model whose first stage
/// is autoregressive; decoded once and kept fixed.
pub fn generate_synthetic_pivots<T: Scalar>(
    s2p: Stage<T>,
    srcs: &[Vec<usize>],
    beam: usize,
) -> Result<DecodedCorpus> {
    decode_corpus(s2p, srcs, beam, 1)
}

/// Sources paired with the teacher's best outputs.
pub fn distill_corpus<T: Scalar>(
    teacher: Stage<T>,
    srcs: &[Vec<usize>],
    beam: usize,
) -> Result<(Pairs, Vec<usize>)> {
    if teacher.model.kind != DecoderKind::Autoregressive {
        return Err(Error::Config(
            "the distillation teacher must be autoregressive".into(),
        ));
    }
    let d = decode_corpus(teacher, srcs, beam, 1)?;
    Ok((
        Pairs {
            src: srcs.to_vec(),
            trg: d.lines,
        },
        d.failed,
    ))
}
