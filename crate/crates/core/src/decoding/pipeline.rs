use crate::autodiff::{Graph, Scalar};
use crate::cascade::{resolve_lengths, IntegratedInput, IntegratedModel, LengthPolicy};
use crate::data::Vocabulary;
use crate::error::{Error, Result};
use crate::nnet::{Bound, DecoderKind, ParamStore, TokenBatch, Transformer};

use super::beam::{beam_search, ArScorer, BeamConfig, Hypothesis, NBestList};
use super::mask_predict::{mask_predict_on, remask_count, MaskPredictState};

/// A model with its parameters.
#[derive(Debug, Clone, Copy)]
pub struct Stage<'a, T> {
    pub model: &'a Transformer,
    pub params: &'a ParamStore<T>,
}

impl<'a, T> Stage<'a, T> {
    pub fn new(model: &'a Transformer, params: &'a ParamStore<T>) -> Self {
        Stage { model, params }
    }
}

/// How the first stage produces its pivot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PivotDecoder {
    Beam(BeamConfig),
    MaskPredict {
        iterations: usize,
        length: LengthPolicy,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoPassConfig {
    pub pivot: PivotDecoder,
    pub target: BeamConfig,
    /// Seed of a random pivot length policy.
    pub length_seed: u64,
}

/// N-best autoregressive decoding of one source.
pub fn decode_ar<T: Scalar>(stage: Stage<T>, src: &[usize], cfg: &BeamConfig) -> Result<NBestList> {
    let mut scorer = ArScorer::from_source(stage.model, stage.params, src)?;
    beam_search(&mut scorer, cfg)
}

/// Target lengths for mask-predict under `policy`.
pub fn nat_lengths<T: Scalar>(
    stage: Stage<T>,
    srcs: &[Vec<usize>],
    policy: LengthPolicy,
    ref_lengths: Option<&[usize]>,
    seed: u64,
) -> Result<Vec<usize>> {
    let mut g = Graph::inference();
    let b = Bound::all(&mut g, stage.params);
    let view = b.view("");
    let batch = TokenBatch::from_seqs(srcs);
    let enc = stage.model.encode(&mut g, &view, &batch)?;
    resolve_lengths(
        policy,
        stage.model,
        &mut g,
        &view,
        &enc,
        &batch.lengths(),
        ref_lengths,
        seed,
    )
}

/// Pivot hypotheses for a batch of sources.
pub fn decode_pivots<T: Scalar>(
    s2p: Stage<T>,
    srcs: &[Vec<usize>],
    pivot: &PivotDecoder,
    ref_lengths: Option<&[usize]>,
    seed: u64,
) -> Result<Vec<Hypothesis>> {
    match *pivot {
        PivotDecoder::Beam(cfg) => srcs
            .iter()
            .map(|s| {
                decode_ar(s2p, s, &cfg)?
                    .into_vec()
                    .into_iter()
                    .next()
                    .ok_or_else(|| Error::Numeric("empty n-best list".into()))
            })
            .collect(),
        PivotDecoder::MaskPredict { iterations, length } => {
            let mut g = Graph::inference();
            let b = Bound::all(&mut g, s2p.params);
            let view = b.view("");
            let batch = TokenBatch::from_seqs(srcs);
            let enc = s2p.model.encode(&mut g, &view, &batch)?;
            let ks = resolve_lengths(
                length,
                s2p.model,
                &mut g,
                &view,
                &enc,
                &batch.lengths(),
                ref_lengths,
                seed,
            )?;
            let states = mask_predict_on(
                s2p.model,
                &mut g,
                &view,
                &enc,
                &ks,
                iterations,
                iterations,
                &mut |_, _| {},
            )?;
            Ok(states
                .into_iter()
                .map(MaskPredictState::into_hypothesis)
                .collect())
        }
    }
}

/// Maps pivot ids between two vocabularies through their surface tokens;
/// the identity when both are the same vocabulary.
pub fn remap_ids(ids: &[usize], from: &Vocabulary, to: &Vocabulary) -> Vec<usize> {
    if from.hash() == to.hash() {
        return ids.to_vec();
    }
    ids.iter()
        .map(|&i| from.token(i).map_or(crate::data::UNK, |t| to.id(t)))
        .collect()
}

/// Decodes pivots with the first model, then targets from the framed pivot
/// ids with the second. `remap` translates between the pivot vocabularies
/// of the two models.
pub fn two_pass_decode_batch<T: Scalar>(
    s2p: Stage<T>,
    p2t: Stage<T>,
    srcs: &[Vec<usize>],
    cfg: &TwoPassConfig,
    ref_lengths: Option<&[usize]>,
    remap: Option<(&Vocabulary, &Vocabulary)>,
) -> Result<Vec<(Hypothesis, Hypothesis)>> {
    let pivots = decode_pivots(s2p, srcs, &cfg.pivot, ref_lengths, cfg.length_seed)?;
    pivots
        .into_iter()
        .map(|piv| {
            let mut ids = piv.framed();
            if let Some((from, to)) = remap {
                ids = remap_ids(&ids, from, to);
            }
            let trg = decode_ar(p2t, &ids, &cfg.target)?
                .into_vec()
                .into_iter()
                .next()
                .ok_or_else(|| Error::Numeric("empty n-best list".into()))?;
            Ok((piv, trg))
        })
        .collect()
}

pub fn two_pass_decode<T: Scalar>(
    s2p: Stage<T>,
    p2t: Stage<T>,
    src: &[usize],
    cfg: &TwoPassConfig,
) -> Result<(Hypothesis, Hypothesis)> {
    let mut out = two_pass_decode_batch(s2p, p2t, &[src.to_vec()], cfg, None, None)?;
    Ok(out.remove(0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratedDecodeConfig {
    pub beam: BeamConfig,
    /// Pivot search for an autoregressive first stage.
    pub pivot_beam: BeamConfig,
    /// Feed one-hot argmax posteriors instead of the distributions.
    pub hard: bool,
    /// Non-autoregressive iterations before the bridge; training always
    /// uses one, so more is a train/test mismatch.
    pub iterations: usize,
    pub length_seed: u64,
}

impl IntegratedDecodeConfig {
    pub fn new(beam: BeamConfig) -> Self {
        IntegratedDecodeConfig {
            beam,
            pivot_beam: beam,
            hard: false,
            iterations: 1,
            length_seed: 0,
        }
    }
}

/// Decodes one source with an integrated model: one non-autoregressive
/// pass over a masked pivot of policy length (or an autoregressive pivot
/// search), the bridge, then beam search in the p2t decoder. Returns the
/// argmax pivot and the target.
pub fn decode_integrated<T: Scalar>(
    model: &IntegratedModel<T>,
    src: &[usize],
    ref_length: Option<usize>,
    cfg: &IntegratedDecodeConfig,
) -> Result<(Hypothesis, Hypothesis)> {
    if cfg.iterations < 1 {
        return Err(Error::InvalidArgument(
            "integrated decoding needs at least one iteration".into(),
        ));
    }
    let arch = &model.arch;
    let mut g = Graph::inference();
    let b = Bound::all(&mut g, &model.params);
    let src_batch = TokenBatch::from_seqs(&[src]);
    let refs = ref_length.map(|r| vec![r]);
    let mut input = IntegratedInput::new(&src_batch);
    input.ref_lengths = refs.as_deref();
    input.length_seed = cfg.length_seed;
    input.hard = cfg.hard;
    let mut ar_pivot = None;
    let pivot_input: Option<Vec<Vec<usize>>> = match arch.s2p.kind {
        DecoderKind::Autoregressive => {
            let s2p_params = model.params.strip_prefix("s2p.");
            let hyp = decode_ar(Stage::new(&arch.s2p, &s2p_params), src, &cfg.pivot_beam)?
                .into_vec()
                .remove(0);
            let framed = hyp.framed();
            ar_pivot = Some(hyp);
            Some(vec![framed])
        }
        DecoderKind::NonAutoregressive if cfg.iterations > 1 => {
            let view = b.view("s2p.");
            let enc = arch.s2p.encode(&mut g, &view, &src_batch)?;
            let ks = resolve_lengths(
                arch.length,
                &arch.s2p,
                &mut g,
                &view,
                &enc,
                &src_batch.lengths(),
                input.ref_lengths,
                cfg.length_seed,
            )?;
            let states = mask_predict_on(
                &arch.s2p,
                &mut g,
                &view,
                &enc,
                &ks,
                cfg.iterations,
                cfg.iterations - 1,
                &mut |_, _| {},
            )?;
            let n = remask_count(ks[0], cfg.iterations - 1, cfg.iterations);
            Some(vec![states[0].remasked(n)])
        }
        DecoderKind::NonAutoregressive => None,
    };
    input.pivot = pivot_input.as_deref();
    let enc = model.encode(&mut g, &b, &input)?;
    let pivot = match ar_pivot {
        Some(h) => h,
        None => {
            let post = enc.pivot.posteriors(&mut g)?;
            let post = g.value(post);
            let k = enc.pivot_lengths[0];
            let mut tokens = Vec::with_capacity(k);
            let mut score = 0.0;
            for i in 0..k {
                let row = post.row(i);
                let (tok, p) = row
                    .iter()
                    .enumerate()
                    .filter(|(id, _)| *id != crate::data::PAD && *id != crate::data::MASK)
                    .fold((0, f64::NEG_INFINITY), |m, (id, &x)| {
                        if x.as_f64() > m.1 {
                            (id, x.as_f64())
                        } else {
                            m
                        }
                    });
                tokens.push(tok);
                score += p.ln();
            }
            Hypothesis {
                tokens,
                score,
                norm_score: score / k as f64,
                cutoff: false,
            }
        }
    };
    let mut scorer = ArScorer::from_encoding(&arch.p2t, g, b, "p2t.", enc.bridged)?;
    let target = beam_search(&mut scorer, &cfg.beam)?
        .into_vec()
        .into_iter()
        .next()
        .ok_or_else(|| Error::Numeric("empty n-best list".into()))?;
    Ok((pivot, target))
}
