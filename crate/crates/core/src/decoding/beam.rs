use std::collections::HashSet;

use crate::autodiff::{Graph, Scalar};
use crate::data::{is_special, BOS, EOS, UNK};
use crate::error::{Error, Result};
use crate::nnet::{Bound, EncoderOutput, ParamStore, TokenBatch, Transformer};

/// One decoded sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct Hypothesis {
    /// Output ids; `BOS .. EOS` for autoregressive output.
    pub tokens: Vec<usize>,
    /// Sum of token log-probabilities.
    pub score: f64,
    /// `score` divided by the number of scored tokens.
    pub norm_score: f64,
    /// Stopped at the length limit instead of at EOS.
    pub cutoff: bool,
}

impl Hypothesis {
    /// Tokens without reserved ids (UNK kept).
    pub fn content(&self) -> Vec<usize> {
        self.tokens
            .iter()
            .copied()
            .filter(|&t| !is_special(t) || t == UNK)
            .collect()
    }

    /// `[BOS, content.., EOS]`, the form fed to a second model.
    pub fn framed(&self) -> Vec<usize> {
        let mut v = vec![BOS];
        v.extend(self.content());
        v.push(EOS);
        v
    }
}

/// Hypotheses sorted by descending ranking score, without duplicates.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct NBestList {
    hyps: Vec<Hypothesis>,
}

impl NBestList {
    /// Sorts by `norm_score` (or `score`), drops repeated token sequences and
    /// keeps the first `n`.
    pub fn from_hypotheses(mut hyps: Vec<Hypothesis>, normalize: bool, n: usize) -> Self {
        let key = |h: &Hypothesis| if normalize { h.norm_score } else { h.score };
        hyps.sort_by(|a, b| key(b).total_cmp(&key(a)));
        let mut seen = HashSet::new();
        hyps.retain(|h| seen.insert(h.tokens.clone()));
        hyps.truncate(n);
        NBestList { hyps }
    }

    pub fn best(&self) -> Option<&Hypothesis> {
        self.hyps.first()
    }

    pub fn hyps(&self) -> &[Hypothesis] {
        &self.hyps
    }

    pub fn into_vec(self) -> Vec<Hypothesis> {
        self.hyps
    }

    pub fn len(&self) -> usize {
        self.hyps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hyps.is_empty()
    }
}

/// Next-token log-probabilities for a set of equal-length prefixes.
pub trait StepScorer {
    fn log_probs(&mut self, prefixes: &[Vec<usize>]) -> Result<Vec<Vec<f64>>>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeamConfig {
    pub beam_size: usize,
    pub n_best: usize,
    /// Maximum number of generated tokens (EOS included, BOS excluded).
    pub max_len: usize,
    /// Rank finished hypotheses by per-token score.
    pub normalize: bool,
}

impl BeamConfig {
    pub fn greedy(max_len: usize) -> Self {
        BeamConfig {
            beam_size: 1,
            n_best: 1,
            max_len,
            normalize: true,
        }
    }

    pub fn new(beam_size: usize, max_len: usize) -> Self {
        BeamConfig {
            beam_size,
            n_best: 1,
            max_len,
            normalize: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_len < 1 {
            return Err(Error::InvalidArgument("max_len must be at least 1".into()));
        }
        if self.n_best < 1 || self.beam_size < self.n_best {
            return Err(Error::InvalidArgument(format!(
                "need beam_size >= n_best >= 1, got beam_size {} and n_best {}",
                self.beam_size, self.n_best
            )));
        }
        Ok(())
    }
}

fn finish(tokens: Vec<usize>, score: f64, cutoff: bool) -> Hypothesis {
    let n = (tokens.len() - 1).max(1) as f64;
    Hypothesis {
        tokens,
        score,
        norm_score: score / n,
        cutoff,
    }
}

/// Beam search from `[BOS]`. Each step keeps the `beam_size` best
/// expansions of the live hypotheses; expansions ending in EOS are set
/// aside as finished, and live ones are cut off after `max_len` tokens.
/// Only EOS and ordinary tokens are generated.
pub fn beam_search<S: StepScorer + ?Sized>(scorer: &mut S, cfg: &BeamConfig) -> Result<NBestList> {
    cfg.validate()?;
    let mut live: Vec<(Vec<usize>, f64)> = vec![(vec![BOS], 0.0)];
    let mut done = Vec::new();
    for step in 1..=cfg.max_len {
        let prefixes: Vec<Vec<usize>> = live.iter().map(|(t, _)| t.clone()).collect();
        let lp = scorer.log_probs(&prefixes)?;
        let mut cands: Vec<(f64, usize, usize)> = Vec::new();
        for (h, row) in lp.iter().enumerate() {
            for (tok, &l) in row.iter().enumerate() {
                if (tok == EOS || !is_special(tok) || tok == UNK) && l > f64::NEG_INFINITY {
                    cands.push((live[h].1 + l, h, tok));
                }
            }
        }
        // stable: ties keep (hypothesis, token) order
        cands.sort_by(|a, b| b.0.total_cmp(&a.0));
        cands.truncate(cfg.beam_size);
        let mut next = Vec::new();
        for (score, h, tok) in cands {
            let mut t = live[h].0.clone();
            t.push(tok);
            if tok == EOS {
                done.push(finish(t, score, false));
            } else if step == cfg.max_len {
                done.push(finish(t, score, true));
            } else {
                next.push((t, score));
            }
        }
        live = next;
        if live.is_empty() {
            break;
        }
    }
    if done.is_empty() {
        return Err(Error::Numeric(
            "beam search produced no finite hypothesis".into(),
        ));
    }
    Ok(NBestList::from_hypotheses(done, cfg.normalize, cfg.n_best))
}

/// Step-wise argmax rollout.
pub fn greedy_rollout<S: StepScorer + ?Sized>(
    scorer: &mut S,
    max_len: usize,
) -> Result<Hypothesis> {
    let mut tokens = vec![BOS];
    let mut score = 0.0;
    for step in 1..=max_len {
        let lp = scorer.log_probs(std::slice::from_ref(&tokens))?;
        let row = &lp[0];
        let mut best = None;
        for (tok, &l) in row.iter().enumerate() {
            let allowed = tok == EOS || !is_special(tok) || tok == UNK;
            if allowed && best.is_none_or(|(_, b)| l > b) {
                best = Some((tok, l));
            }
        }
        let (tok, l) = best.ok_or_else(|| Error::Numeric("no token to choose".into()))?;
        tokens.push(tok);
        score += l;
        if tok == EOS {
            return Ok(finish(tokens, score, false));
        }
        if step == max_len {
            break;
        }
    }
    Ok(finish(tokens, score, true))
}

/// Scores prefixes with an autoregressive decoder over a fixed encoding of
/// one sentence; the graph grows by one decoder pass per step.
pub struct ArScorer<'m, T: Scalar> {
    model: &'m Transformer,
    g: Graph<T>,
    bound: Bound,
    prefix: String,
    enc: EncoderOutput,
    expanded: Option<(usize, EncoderOutput)>,
}

impl<'m, T: Scalar> ArScorer<'m, T> {
    /// Encodes `src` with `model`'s own encoder.
    pub fn from_source(
        model: &'m Transformer,
        params: &ParamStore<T>,
        src: &[usize],
    ) -> Result<Self> {
        let mut g = Graph::inference();
        let bound = Bound::all(&mut g, params);
        let enc = model.encode(&mut g, &bound.view(""), &TokenBatch::from_seqs(&[src]))?;
        Ok(ArScorer {
            model,
            g,
            bound,
            prefix: String::new(),
            enc,
            expanded: None,
        })
    }

    /// Uses an encoding already on `g` (batch 1); `prefix` selects the
    /// decoder's parameters within `bound`.
    pub fn from_encoding(
        model: &'m Transformer,
        g: Graph<T>,
        bound: Bound,
        prefix: &str,
        enc: EncoderOutput,
    ) -> Result<Self> {
        if enc.batch != 1 {
            return Err(Error::InvalidArgument(format!(
                "expected one encoded sentence, got {}",
                enc.batch
            )));
        }
        Ok(ArScorer {
            model,
            g,
            bound,
            prefix: prefix.to_string(),
            enc,
            expanded: None,
        })
    }

    fn encoding(&mut self, n: usize) -> Result<EncoderOutput> {
        if n == 1 {
            return Ok(self.enc.clone());
        }
        if let Some((m, e)) = &self.expanded {
            if *m == n {
                return Ok(e.clone());
            }
        }
        let states = self.g.concat(&vec![self.enc.states; n], 0)?;
        let e = EncoderOutput {
            states,
            mask: self.enc.mask.repeat(n),
            batch: n,
            len: self.enc.len,
        };
        self.expanded = Some((n, e.clone()));
        Ok(e)
    }
}

impl<T: Scalar> StepScorer for ArScorer<'_, T> {
    fn log_probs(&mut self, prefixes: &[Vec<usize>]) -> Result<Vec<Vec<f64>>> {
        let n = prefixes.len();
        let len = prefixes[0].len();
        if prefixes.iter().any(|p| p.len() != len) {
            return Err(Error::InvalidArgument(
                "prefixes must share one length".into(),
            ));
        }
        let enc = self.encoding(n)?;
        let view = self.bound.view(&self.prefix);
        let out = self
            .model
            .decode(&mut self.g, &view, &enc, &TokenBatch::from_seqs(prefixes))?;
        let last = self.g.slice(out.logits, 1, len - 1, 1)?;
        let lp = self.g.log_softmax(last)?;
        let v = self.model.cfg.vocab_size_tgt;
        Ok(self
            .g
            .value(lp)
            .data()
            .chunks(v)
            .map(|r| r.iter().map(|x| x.as_f64()).collect())
            .collect())
    }
}
