use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Graph, Scalar, Var};
use crate::cascade::{IntegratedInput, IntegratedModel, LengthPolicy};
use crate::data::{Vocabulary, MASK, PAD};
use crate::decoding::{
    decode_ar, decode_integrated, decode_pivots, BeamConfig, IntegratedDecodeConfig, PivotDecoder,
    Stage,
};
use crate::error::{Error, Result};
use crate::evaluation::corpus_bleu;
use crate::nnet::{Bound, DecoderKind, ParamStore, ParamView, TokenBatch, Transformer};

use super::batching::token_batches;
use super::config::{lr_schedule, TrainConfig};
use super::metrics::{MetricsLog, MetricsRecord};
use super::optim::{adam_step, AdamState};

/// Aligned id sequences, each framed `[BOS .. EOS]`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Pairs {
    pub src: Vec<Vec<usize>>,
    pub trg: Vec<Vec<usize>>,
}

impl Pairs {
    pub fn encode<S: AsRef<str>>(
        src: &[S],
        trg: &[S],
        src_vocab: &Vocabulary,
        trg_vocab: &Vocabulary,
    ) -> Result<Self> {
        if src.len() != trg.len() {
            return Err(Error::Data(format!(
                "{} source lines vs {} target lines",
                src.len(),
                trg.len()
            )));
        }
        Ok(Pairs {
            src: src
                .iter()
                .map(|l| src_vocab.encode_line(l.as_ref()))
                .collect(),
            trg: trg
                .iter()
                .map(|l| trg_vocab.encode_line(l.as_ref()))
                .collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.src.len()
    }

    pub fn is_empty(&self) -> bool {
        self.src.is_empty()
    }

    fn check(&self) -> Result<()> {
        if self.is_empty() {
            return Err(Error::Data("training corpus is empty".into()));
        }
        if self.src.len() != self.trg.len() {
            return Err(Error::Data(
                "source and target sides differ in length".into(),
            ));
        }
        if let Some(i) = self.trg.iter().position(|t| t.len() < 2) {
            return Err(Error::Data(format!("target {i} is not framed by BOS/EOS")));
        }
        Ok(())
    }
}

/// Development data: encoded sources, encoded references and reference
/// text in the output vocabulary.
#[derive(Debug, Clone)]
pub struct DevSet {
    pub src: Vec<Vec<usize>>,
    pub ref_ids: Vec<Vec<usize>>,
    pub refs: Vec<String>,
    pub vocab: Vocabulary,
}

impl DevSet {
    pub fn new<S: AsRef<str>>(
        src: &[S],
        refs: &[S],
        src_vocab: &Vocabulary,
        trg_vocab: &Vocabulary,
    ) -> Result<Self> {
        let p = Pairs::encode(src, refs, src_vocab, trg_vocab)?;
        Ok(DevSet {
            src: p.src,
            ref_ids: p.trg,
            refs: refs.iter().map(|r| r.as_ref().to_string()).collect(),
            vocab: trg_vocab.clone(),
        })
    }

    fn bleu(&self, hyps: &[Vec<usize>]) -> Result<f64> {
        let text: Vec<String> = hyps.iter().map(|h| self.vocab.decode_line(h)).collect();
        Ok(corpus_bleu(&text, &self.refs)?.bleu)
    }
}

/// Result of a training run.
#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    /// Best-dev parameters, or the final ones without dev data.
    pub params: ParamStore<T>,
    pub last: ParamStore<T>,
    /// `(update, dev BLEU)` of the selected checkpoint.
    pub best: Option<(usize, f64)>,
    pub updates: usize,
    pub skipped_steps: usize,
    pub snapshots: Vec<(usize, ParamStore<T>)>,
    /// Training loss per update.
    pub losses: Vec<f64>,
}

/// Decoding length limit for a source of `len` ids.
pub fn max_decode_len(len: usize, model: &Transformer) -> usize {
    (2 * len + 10).min(model.cfg.max_positions)
}

fn mix(a: u64, b: u64, c: u64) -> u64 {
    // splitmix64 over the three inputs
    let mut z = a
        .wrapping_add(b.wrapping_mul(0x9E3779B97F4A7C15))
        .wrapping_add(c.wrapping_mul(0xBF58476D1CE4E5B9));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

fn framed_targets(trg: &[&[usize]]) -> (TokenBatch, Vec<usize>) {
    let prefix: Vec<&[usize]> = trg.iter().map(|t| &t[..t.len() - 1]).collect();
    let batch = TokenBatch::from_seqs(&prefix);
    let mut gold = vec![PAD; batch.batch * batch.len];
    for (b, t) in trg.iter().enumerate() {
        for (i, &tok) in t[1..].iter().enumerate() {
            gold[b * batch.len + i] = tok;
        }
    }
    (batch, gold)
}

fn weights<T: Scalar>(mask: &[bool]) -> Vec<T> {
    mask.iter()
        .map(|&m| if m { T::lit(1.0) } else { T::lit(0.0) })
        .collect()
}

/// Teacher-forced cross-entropy summed over target tokens; returns the
/// loss and the token count.
pub fn ar_batch_loss<T: Scalar>(
    g: &mut Graph<T>,
    model: &Transformer,
    p: &ParamView,
    src: &[&[usize]],
    trg: &[&[usize]],
    smoothing: f64,
) -> Result<(Var, usize)> {
    let enc = model.encode(g, p, &TokenBatch::from_seqs(src))?;
    let (prefix, gold) = framed_targets(trg);
    let out = model.decode(g, p, &enc, &prefix)?;
    let w = weights::<T>(&prefix.mask);
    let n = prefix.mask.iter().filter(|&&m| m).count();
    Ok((g.cross_entropy(out.logits, &gold, &w, smoothing)?, n))
}

/// Positions to mask in a target of length `k`: a count uniform in
/// `[1, k]`, then that many distinct positions.
pub fn sample_mask<R: Rng>(rng: &mut R, k: usize) -> Vec<bool> {
    let n = rng.gen_range(1..=k);
    let mut m = vec![false; k];
    for i in sample(rng, k, n) {
        m[i] = true;
    }
    m
}

/// Masked-token cross-entropy (mean over masked tokens) plus
/// `length_weight` times the length-prediction cross-entropy (mean over
/// sentences).
pub fn nat_batch_loss<T: Scalar, R: Rng>(
    g: &mut Graph<T>,
    model: &Transformer,
    p: &ParamView,
    src: &[&[usize]],
    trg: &[&[usize]],
    rng: &mut R,
    length_weight: f64,
) -> Result<Var> {
    let enc = model.encode(g, p, &TokenBatch::from_seqs(src))?;
    let masks: Vec<Vec<bool>> = trg.iter().map(|t| sample_mask(rng, t.len())).collect();
    let inputs: Vec<Vec<usize>> = trg
        .iter()
        .zip(&masks)
        .map(|(t, m)| {
            t.iter()
                .zip(m)
                .map(|(&x, &mm)| if mm { MASK } else { x })
                .collect()
        })
        .collect();
    let batch = TokenBatch::from_seqs(&inputs);
    let mut gold = vec![PAD; batch.batch * batch.len];
    let mut w = vec![T::lit(0.0); batch.batch * batch.len];
    let mut count = 0;
    for (b, (t, m)) in trg.iter().zip(&masks).enumerate() {
        for i in 0..t.len() {
            gold[b * batch.len + i] = t[i];
            if m[i] {
                w[b * batch.len + i] = T::lit(1.0);
                count += 1;
            }
        }
    }
    let out = model.decode(g, p, &enc, &batch)?;
    let tok = g.cross_entropy(out.logits, &gold, &w, 0.0)?;
    let tok = g.scale(tok, T::lit(1.0 / count as f64));
    if length_weight == 0.0 {
        return Ok(tok);
    }
    let len_logits = model.predict_length(g, p, &enc)?;
    let max = model.cfg.max_positions;
    if let Some(t) = trg.iter().find(|t| t.len() > max) {
        return Err(Error::InvalidArgument(format!(
            "target length {} exceeds max_positions {max}",
            t.len()
        )));
    }
    let len_gold: Vec<usize> = trg.iter().map(|t| t.len() - 1).collect();
    let len_loss = g.cross_entropy(len_logits, &len_gold, &vec![T::lit(1.0); trg.len()], 0.0)?;
    let len_loss = g.scale(len_loss, T::lit(length_weight / trg.len() as f64));
    g.add(tok, len_loss)
}

/// Integrated forward on a batch, cross-entropy summed over target tokens.
#[allow(clippy::too_many_arguments)]
pub fn integrated_batch_loss<T: Scalar>(
    g: &mut Graph<T>,
    model: &IntegratedModel<T>,
    b: &Bound,
    src: &[&[usize]],
    trg: &[&[usize]],
    pivot: Option<&[Vec<usize>]>,
    smoothing: f64,
    length_seed: u64,
) -> Result<(Var, usize)> {
    let src_batch = TokenBatch::from_seqs(src);
    let ref_lengths: Vec<usize> = trg.iter().map(|t| t.len()).collect();
    let mut input = IntegratedInput::new(&src_batch);
    input.pivot = pivot;
    input.ref_lengths = Some(&ref_lengths);
    input.length_seed = length_seed;
    let (prefix, gold) = framed_targets(trg);
    let (_, out) = model.forward(g, b, &input, &prefix)?;
    let w = weights::<T>(&prefix.mask);
    let n = prefix.mask.iter().filter(|&&m| m).count();
    Ok((g.cross_entropy(out.logits, &gold, &w, smoothing)?, n))
}

type LossFn<'a, T> = dyn FnMut(&mut Graph<T>, &Bound, &[usize], u64) -> Result<(Var, f64)> + 'a;
type EvalFn<'a, T> = dyn FnMut(&ParamStore<T>) -> Result<f64> + 'a;

fn add_into<T: Scalar>(acc: &mut ParamStore<T>, g: ParamStore<T>) -> Result<()> {
    for (name, t) in g.iter() {
        if acc.contains(name) {
            let a = acc.get_mut(name)?.data_mut();
            for (x, y) in a.iter_mut().zip(t.data()) {
                *x += *y;
            }
        } else {
            acc.insert(name, t.clone());
        }
    }
    Ok(())
}

/// Shared update loop: token-budget batches, gradient accumulation,
/// Adam with the warm-up schedule, periodic dev evaluation and best-dev
/// selection.
fn train_loop<T: Scalar>(
    params: ParamStore<T>,
    cfg: &TrainConfig,
    lengths: &[usize],
    loss_fn: &mut LossFn<T>,
    eval: Option<&mut EvalFn<T>>,
    log: &mut MetricsLog,
) -> Result<TrainOutcome<T>> {
    cfg.validate()?;
    let mut params = params;
    let mut eval = eval;
    let frozen = |n: &str| cfg.freeze.iter().any(|p| n.starts_with(p.as_str()));
    let mut state = AdamState::new(cfg.betas, cfg.adam_eps);
    let mut epoch = 0u64;
    let mut batches = token_batches(lengths, cfg.batch_tokens, mix(cfg.seed, epoch, 0))?;
    let mut pos = 0;
    let mut out = TrainOutcome {
        params: ParamStore::new(),
        last: ParamStore::new(),
        best: None,
        updates: 0,
        skipped_steps: 0,
        snapshots: Vec::new(),
        losses: Vec::new(),
    };
    let mut best_params: Option<ParamStore<T>> = None;
    let (mut dev_runs, mut dev_failures) = (0, 0);
    for update in 1..=cfg.max_updates {
        let lr = lr_schedule(update, cfg.warmup, cfg.lr);
        let mut grads = ParamStore::new();
        let (mut loss_sum, mut weight) = (0.0, 0.0);
        for micro in 0..cfg.accum_steps {
            if pos == batches.len() {
                epoch += 1;
                batches = token_batches(lengths, cfg.batch_tokens, mix(cfg.seed, epoch, 0))?;
                pos = 0;
            }
            let batch = &batches[pos];
            pos += 1;
            let step_seed = mix(cfg.seed, update as u64, micro as u64 + 1);
            let mut g = Graph::new(true, step_seed);
            let b = Bound::new(&mut g, &params, &frozen);
            let (loss, w) = loss_fn(&mut g, &b, batch, step_seed)?;
            loss_sum += g.value(loss).item().as_f64();
            weight += w;
            g.backward(loss)?;
            add_into(&mut grads, b.gradients(&g))?;
        }
        let inv = T::lit(1.0 / weight);
        for (_, t) in grads.iter_mut() {
            t.data_mut().iter_mut().for_each(|x| *x *= inv);
        }
        let grad_norm = grads.sq_norm().sqrt();
        let loss = loss_sum / weight;
        let applied = loss.is_finite() && adam_step(&mut params, &grads, &mut state, lr)?;
        if !applied {
            out.skipped_steps += 1;
            log::warn!("update {update}: non-finite loss or gradient, step skipped");
        }
        out.losses.push(loss);
        out.updates = update;
        log.push(MetricsRecord {
            update,
            split: "train".into(),
            loss: loss.is_finite().then_some(loss),
            lr,
            bleu: None,
            grad_norm: grad_norm.is_finite().then_some(grad_norm),
            skipped_steps: out.skipped_steps,
        })?;
        if cfg.snapshots.contains(&update) {
            out.snapshots.push((update, params.clone()));
        }
        let due =
            (cfg.eval_interval > 0 && update % cfg.eval_interval == 0) || update == cfg.max_updates;
        if let (true, Some(eval)) = (due, eval.as_mut()) {
            dev_runs += 1;
            let bleu = match eval(&params) {
                Ok(b) => b,
                Err(e) => {
                    dev_failures += 1;
                    log::warn!("update {update}: dev evaluation failed: {e}");
                    continue;
                }
            };
            log::info!("update {update}: dev BLEU {bleu:.2}");
            log.push(MetricsRecord {
                update,
                split: "dev".into(),
                loss: None,
                lr,
                bleu: Some(bleu),
                grad_norm: None,
                skipped_steps: out.skipped_steps,
            })?;
            if out.best.is_none_or(|(_, b)| bleu > b) {
                out.best = Some((update, bleu));
                best_params = Some(params.clone());
            }
        }
    }
    if cfg.max_updates > 0 && out.skipped_steps == cfg.max_updates {
        return Err(Error::Numeric(format!(
            "all {} updates had non-finite loss or gradients",
            cfg.max_updates
        )));
    }
    if dev_runs > 0 && dev_failures == dev_runs {
        return Err(Error::Data(format!(
            "all {dev_runs} dev evaluations failed"
        )));
    }
    out.params = best_params.unwrap_or_else(|| params.clone());
    out.last = params;
    Ok(out)
}

/// Dev BLEU of an autoregressive model.
pub fn eval_ar<T: Scalar>(
    model: &Transformer,
    params: &ParamStore<T>,
    dev: &DevSet,
    beam: usize,
) -> Result<f64> {
    let hyps = dev
        .src
        .iter()
        .map(|s| {
            let cfg = BeamConfig::new(beam, max_decode_len(s.len(), model));
            Ok(decode_ar(Stage::new(model, params), s, &cfg)?
                .into_vec()
                .remove(0)
                .content())
        })
        .collect::<Result<Vec<_>>>()?;
    dev.bleu(&hyps)
}

/// Dev BLEU of a non-autoregressive model with predicted lengths.
pub fn eval_nat<T: Scalar>(
    model: &Transformer,
    params: &ParamStore<T>,
    dev: &DevSet,
    iterations: usize,
    length: LengthPolicy,
) -> Result<f64> {
    let pivot = PivotDecoder::MaskPredict { iterations, length };
    let lens: Vec<usize> = dev.ref_ids.iter().map(Vec::len).collect();
    let hyps = decode_pivots(Stage::new(model, params), &dev.src, &pivot, Some(&lens), 0)?;
    dev.bleu(&hyps.iter().map(|h| h.content()).collect::<Vec<_>>())
}

/// Dev BLEU of an integrated model.
pub fn eval_integrated<T: Scalar>(
    model: &IntegratedModel<T>,
    dev: &DevSet,
    beam: usize,
) -> Result<f64> {
    let hyps = dev
        .src
        .iter()
        .zip(&dev.ref_ids)
        .map(|(s, r)| {
            let b = BeamConfig::new(beam, max_decode_len(s.len(), &model.arch.p2t));
            let cfg = IntegratedDecodeConfig {
                pivot_beam: BeamConfig::new(beam, max_decode_len(s.len(), &model.arch.s2p)),
                ..IntegratedDecodeConfig::new(b)
            };
            Ok(decode_integrated(model, s, Some(r.len()), &cfg)?
                .1
                .content())
        })
        .collect::<Result<Vec<_>>>()?;
    dev.bleu(&hyps)
}

fn rows<'a>(data: &'a [Vec<usize>], idx: &[usize]) -> Vec<&'a [usize]> {
    idx.iter().map(|&i| data[i].as_slice()).collect()
}

/// Trains an autoregressive model with teacher forcing.
pub fn pretrain_ar<T: Scalar>(
    model: &Transformer,
    init: ParamStore<T>,
    data: &Pairs,
    dev: Option<&DevSet>,
    cfg: &TrainConfig,
    log: &mut MetricsLog,
) -> Result<TrainOutcome<T>> {
    if model.kind != DecoderKind::Autoregressive {
        return Err(Error::Config(
            "pretrain_ar needs an autoregressive model".into(),
        ));
    }
    data.check()?;
    model.check_params(&init)?;
    let lengths: Vec<usize> = data.trg.iter().map(|t| t.len().max(1)).collect();
    let mut loss_fn = |g: &mut Graph<T>, b: &Bound, idx: &[usize], _seed: u64| {
        let (loss, n) = ar_batch_loss(
            g,
            model,
            &b.view(""),
            &rows(&data.src, idx),
            &rows(&data.trg, idx),
            cfg.label_smoothing,
        )?;
        Ok((loss, n as f64))
    };
    let mut eval = |p: &ParamStore<T>| eval_ar(model, p, dev.unwrap(), cfg.eval_beam);
    let eval: Option<&mut EvalFn<T>> = if dev.is_some() { Some(&mut eval) } else { None };
    train_loop(init, cfg, &lengths, &mut loss_fn, eval, log)
}

/// Trains a non-autoregressive model as a conditional masked language
/// model with a jointly trained length head.
pub fn pretrain_nat<T: Scalar>(
    model: &Transformer,
    init: ParamStore<T>,
    data: &Pairs,
    dev: Option<&DevSet>,
    cfg: &TrainConfig,
    log: &mut MetricsLog,
) -> Result<TrainOutcome<T>> {
    if model.kind != DecoderKind::NonAutoregressive {
        return Err(Error::Config(
            "pretrain_nat needs a non-autoregressive model".into(),
        ));
    }
    data.check()?;
    model.check_params(&init)?;
    let lengths: Vec<usize> = data.trg.iter().map(Vec::len).collect();
    let mut loss_fn = |g: &mut Graph<T>, b: &Bound, idx: &[usize], seed: u64| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let loss = nat_batch_loss(
            g,
            model,
            &b.view(""),
            &rows(&data.src, idx),
            &rows(&data.trg, idx),
            &mut rng,
            cfg.length_loss_weight,
        )?;
        Ok((loss, 1.0))
    };
    let mut eval = |p: &ParamStore<T>| {
        eval_nat(
            model,
            p,
            dev.unwrap(),
            cfg.eval_iterations,
            LengthPolicy::Predicted,
        )
    };
    let eval: Option<&mut EvalFn<T>> = if dev.is_some() { Some(&mut eval) } else { None };
    train_loop(init, cfg, &lengths, &mut loss_fn, eval, log)
}

/// Fine-tunes an integrated model end to end on src→trg pairs.
/// `pivots` are the fixed pivot sequences an autoregressive first stage is
/// teacher-forced on.
pub fn finetune_integrated<T: Scalar>(
    model: &IntegratedModel<T>,
    data: &Pairs,
    pivots: Option<&[Vec<usize>]>,
    dev: Option<&DevSet>,
    cfg: &TrainConfig,
    log: &mut MetricsLog,
) -> Result<TrainOutcome<T>> {
    data.check()?;
    if let Some(p) = pivots {
        if p.len() != data.len() {
            return Err(Error::Data(format!(
                "{} pivots for {} training pairs",
                p.len(),
                data.len()
            )));
        }
    }
    if model.arch.s2p.kind == DecoderKind::Autoregressive && pivots.is_none() {
        return Err(Error::Config(
            "an autoregressive s2p model needs synthetic pivots".into(),
        ));
    }
    let lengths: Vec<usize> = data.trg.iter().map(|t| t.len().max(1)).collect();
    let arch = model.arch.clone();
    let mut loss_fn = |g: &mut Graph<T>, b: &Bound, idx: &[usize], seed: u64| {
        let piv: Option<Vec<Vec<usize>>> =
            pivots.map(|p| idx.iter().map(|&i| p[i].clone()).collect());
        // a view of the model whose parameters are the bound ones
        let shell = IntegratedModel {
            arch: arch.clone(),
            params: ParamStore::new(),
        };
        let (loss, n) = integrated_batch_loss(
            g,
            &shell,
            b,
            &rows(&data.src, idx),
            &rows(&data.trg, idx),
            piv.as_deref(),
            cfg.label_smoothing,
            seed,
        )?;
        Ok((loss, n as f64))
    };
    let mut eval = |p: &ParamStore<T>| {
        let m = IntegratedModel {
            arch: arch.clone(),
            params: p.clone(),
        };
        eval_integrated(&m, dev.unwrap(), cfg.eval_beam)
    };
    let eval: Option<&mut EvalFn<T>> = if dev.is_some() { Some(&mut eval) } else { None };
    train_loop(model.params.clone(), cfg, &lengths, &mut loss_fn, eval, log)
}
