use crate::autodiff::{Graph, Scalar};
use crate::data::{MASK, PAD};
use crate::error::{Error, Result};
use crate::nnet::{Bound, DecoderKind, EncoderOutput, ParamView, TokenBatch, Transformer};

use super::Hypothesis;

/// Positions re-masked after iteration `t` of `iterations`:
/// `ceil(k * (iterations - t) / iterations)`.
pub fn remask_count(k: usize, t: usize, iterations: usize) -> usize {
    (k * iterations.saturating_sub(t)).div_ceil(iterations)
}

/// Per-sentence decoding state: current tokens and their probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskPredictState {
    pub tokens: Vec<usize>,
    pub probs: Vec<f64>,
}

impl MaskPredictState {
    /// The current tokens with the `n` least confident positions replaced by
    /// MASK (ties go to the earlier position).
    pub fn remasked(&self, n: usize) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.tokens.len()).collect();
        order.sort_by(|&a, &b| self.probs[a].total_cmp(&self.probs[b]).then(a.cmp(&b)));
        let mut out = self.tokens.clone();
        for &i in order.iter().take(n) {
            out[i] = MASK;
        }
        out
    }

    pub fn into_hypothesis(self) -> Hypothesis {
        let score: f64 = self.probs.iter().map(|p| p.ln()).sum();
        let n = self.tokens.len().max(1) as f64;
        Hypothesis {
            tokens: self.tokens,
            score,
            norm_score: score / n,
            cutoff: false,
        }
    }
}

fn nat_check(model: &Transformer, iterations: usize, lengths: &[usize]) -> Result<()> {
    if model.kind != DecoderKind::NonAutoregressive {
        return Err(Error::InvalidArgument(
            "mask-predict needs a non-autoregressive model".into(),
        ));
    }
    if iterations < 1 {
        return Err(Error::InvalidArgument(
            "mask-predict needs at least one iteration".into(),
        ));
    }
    if let Some(i) = lengths.iter().position(|&k| k < 1) {
        return Err(Error::InvalidArgument(format!(
            "target length of sentence {i} must be at least 1"
        )));
    }
    Ok(())
}

/// Runs the first `run` of `iterations` mask-predict iterations on an
/// encoding already on `g`. `observe` sees every iteration's decoder input.
#[allow(clippy::too_many_arguments)]
pub fn mask_predict_on<T: Scalar>(
    model: &Transformer,
    g: &mut Graph<T>,
    p: &ParamView,
    enc: &EncoderOutput,
    lengths: &[usize],
    iterations: usize,
    run: usize,
    observe: &mut dyn FnMut(usize, &[Vec<usize>]),
) -> Result<Vec<MaskPredictState>> {
    nat_check(model, iterations, lengths)?;
    let v = model.cfg.vocab_size_tgt;
    let mut states: Vec<MaskPredictState> = lengths
        .iter()
        .map(|&k| MaskPredictState {
            tokens: vec![MASK; k],
            probs: vec![0.0; k],
        })
        .collect();
    for t in 1..=run.min(iterations) {
        let inputs: Vec<Vec<usize>> = if t == 1 {
            states.iter().map(|s| s.tokens.clone()).collect()
        } else {
            states
                .iter()
                .map(|s| s.remasked(remask_count(s.tokens.len(), t - 1, iterations)))
                .collect()
        };
        observe(t, &inputs);
        let batch = TokenBatch::from_seqs(&inputs);
        let out = model.decode(g, p, enc, &batch)?;
        let post = out.posteriors(g)?;
        let post = g.value(post);
        for (b, s) in states.iter_mut().enumerate() {
            for (i, &tok) in inputs[b].iter().enumerate() {
                if tok != MASK {
                    continue;
                }
                let row = post.row(b * batch.len + i);
                let mut best = (PAD, f64::NEG_INFINITY);
                for (id, &x) in row.iter().enumerate().take(v) {
                    let x = x.as_f64();
                    if id != PAD && id != MASK && x > best.1 {
                        best = (id, x);
                    }
                }
                s.tokens[i] = best.0;
                s.probs[i] = best.1;
            }
        }
    }
    Ok(states)
}

/// Mask-predict for a batch of sources with given target lengths.
pub fn mask_predict_batch<T: Scalar>(
    model: &Transformer,
    params: &crate::nnet::ParamStore<T>,
    srcs: &[Vec<usize>],
    lengths: &[usize],
    iterations: usize,
) -> Result<Vec<Hypothesis>> {
    if srcs.len() != lengths.len() {
        return Err(Error::InvalidArgument(format!(
            "{} lengths for {} sources",
            lengths.len(),
            srcs.len()
        )));
    }
    nat_check(model, iterations, lengths)?;
    let mut g = Graph::inference();
    let b = Bound::all(&mut g, params);
    let view = b.view("");
    let enc = model.encode(&mut g, &view, &TokenBatch::from_seqs(srcs))?;
    let states = mask_predict_on(
        model,
        &mut g,
        &view,
        &enc,
        lengths,
        iterations,
        iterations,
        &mut |_, _| {},
    )?;
    Ok(states
        .into_iter()
        .map(MaskPredictState::into_hypothesis)
        .collect())
}

/// Iterative decoding of one sentence: iteration 1 fills a fully masked
/// input of `length` positions, later iterations re-mask and re-predict the
/// least confident positions.
pub fn mask_predict<T: Scalar>(
    model: &Transformer,
    params: &crate::nnet::ParamStore<T>,
    src: &[usize],
    iterations: usize,
    length: usize,
) -> Result<Hypothesis> {
    let mut out = mask_predict_batch(model, params, &[src.to_vec()], &[length], iterations)?;
    Ok(out.remove(0))
}
