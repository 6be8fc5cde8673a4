//! Acceptance criteria 1-9, one PASS/FAIL line each.
//!
//! `cargo test -p cascade-core --test acceptance -- 4 8` runs a subset.

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::OnceLock;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use cascade_core::autodiff::grad_check;
use cascade_core::cascade::{
    concatenate, decode_checkpoint, encode_checkpoint, group_of, load_checkpoint, save_checkpoint,
    InitScheme, IntegratedArch, IntegratedModel, InterfaceKind, LengthPolicy,
};
use cascade_core::data::{
    build_vocab, make_synthetic_task, SyntheticTask, TaskSpec, Vocabulary, BOS, EOS, MASK, UNK,
};
use cascade_core::decoding::{
    beam_search, decode_ar, greedy_rollout, mask_predict, nat_lengths, two_pass_decode,
    two_pass_decode_batch, ArScorer, BeamConfig, Hypothesis, PivotDecoder, Stage, TwoPassConfig,
};
use cascade_core::evaluation::{
    corpus_bleu, error_propagation_sweep, study_sweeps, PropagationSpec, StudyKind, StudySpec,
    SweepResult, ThreeWaySet,
};
use cascade_core::nnet::{
    Bound, DecoderKind, ParamStore, TokenBatch, Transformer, TransformerConfig,
};
use cascade_core::training::{
    eval_integrated, finetune_integrated, integrated_batch_loss, pretrain_ar, pretrain_nat, DevSet,
    MetricsLog, Pairs, TrainConfig,
};
use cascade_core::{Error, Graph, Result, Tensor, Var};

type Outcome = std::result::Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if let false = $cond {
            return Err(format!($($msg)+));
        }
    };
}

fn ok<V>(r: Result<V>) -> std::result::Result<V, String> {
    r.map_err(|e| e.to_string())
}

// ---------------------------------------------------------------- helpers

fn randn(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.gen_range(-1.0..1.0))
}

fn tiny(kind: DecoderKind, vs: usize, vt: usize, d: usize, layers: usize) -> Transformer {
    let cfg = TransformerConfig {
        d_model: d,
        n_heads: 2,
        d_ff: 2 * d,
        n_enc_layers: layers,
        n_dec_layers: layers,
        dropout: 0.0,
        max_positions: 64,
        vocab_size_src: vs,
        vocab_size_tgt: vt,
    };
    Transformer::new(cfg, kind).unwrap()
}

fn rand_seq(rng: &mut ChaCha8Rng, vocab: usize, lo: usize, hi: usize) -> Vec<usize> {
    let n = rng.gen_range(lo..=hi);
    let mut v = vec![BOS];
    v.extend((0..n).map(|_| rng.gen_range(5..vocab)));
    v.push(EOS);
    v
}

fn interfaces() -> [InterfaceKind; 3] {
    [
        InterfaceKind::DecoderStates {
            with_p2t_encoder: true,
        },
        InterfaceKind::DecoderStates {
            with_p2t_encoder: false,
        },
        InterfaceKind::DecoderPosteriors,
    ]
}

fn integrated_arch(
    s2p_kind: DecoderKind,
    interface: InterfaceKind,
    layers: usize,
) -> IntegratedArch {
    IntegratedArch::new(
        tiny(s2p_kind, 11, 10, 8, layers),
        tiny(DecoderKind::Autoregressive, 10, 12, 8, layers),
        interface,
        LengthPolicy::Source,
        "piv",
        "piv",
    )
    .unwrap()
}

// ------------------------------------------------------------ criterion 1

const SEEDS: u64 = 20;

fn project(g: &mut Graph<f64>, y: Var, seed: u64) -> Result<Var> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5151);
    let w = g.constant(randn(g.shape(y), &mut rng));
    let p = g.mul(y, w)?;
    Ok(g.sum(p))
}

type OpFn = Box<dyn Fn(&mut Graph<f64>, Var, u64) -> Result<Var>>;

fn other(g: &mut Graph<f64>, shape: &[usize], seed: u64) -> Var {
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 1000);
    g.constant(randn(shape, &mut rng))
}

fn op_table() -> Vec<(&'static str, Vec<usize>, OpFn)> {
    let mask = [true, true, false, true, true, true, true, false];
    vec![
        (
            "add",
            vec![2, 3, 4],
            Box::new(|g, x, s| {
                let b = other(g, &[3, 4], s);
                g.add(x, b)
            }),
        ),
        (
            "add-broadcast-rhs",
            vec![3, 4],
            Box::new(|g, x, s| {
                let a = other(g, &[2, 3, 4], s);
                g.add(a, x)
            }),
        ),
        (
            "sub",
            vec![3, 4],
            Box::new(|g, x, s| {
                let a = other(g, &[3, 4], s);
                g.sub(a, x)
            }),
        ),
        (
            "mul",
            vec![2, 5],
            Box::new(|g, x, s| {
                let a = other(g, &[3, 2, 5], s);
                let y = g.mul(a, x)?;
                g.mul(y, x)
            }),
        ),
        ("scale", vec![6], Box::new(|g, x, _| Ok(g.scale(x, -1.5)))),
        (
            "relu",
            vec![4, 5],
            Box::new(|g, x, _| {
                let y = g.relu(x);
                g.mul(y, x)
            }),
        ),
        (
            "dropout",
            vec![6, 6],
            Box::new(|g, x, _| g.dropout(x, 0.25)),
        ),
        (
            "matmul",
            vec![2, 3, 4],
            Box::new(|g, x, s| {
                let b = other(g, &[4, 5], s);
                g.matmul(x, b)
            }),
        ),
        (
            "matmul-rhs",
            vec![4, 5],
            Box::new(|g, x, s| {
                let a = other(g, &[2, 3, 4], s);
                g.matmul(a, x)
            }),
        ),
        (
            "matmul-batched",
            vec![2, 4, 3],
            Box::new(|g, x, s| {
                let a = other(g, &[2, 3, 4], s);
                g.matmul(a, x)
            }),
        ),
        (
            "transpose",
            vec![2, 3, 4],
            Box::new(|g, x, _| g.transpose(x)),
        ),
        (
            "permute",
            vec![2, 3, 4, 2],
            Box::new(|g, x, _| g.permute(x, &[0, 2, 1, 3])),
        ),
        (
            "reshape",
            vec![2, 6],
            Box::new(|g, x, _| g.reshape(x, &[4, 3])),
        ),
        (
            "broadcast_to",
            vec![3, 2],
            Box::new(|g, x, _| g.broadcast_to(x, &[2, 2])),
        ),
        (
            "concat",
            vec![2, 3],
            Box::new(|g, x, s| {
                let c = other(g, &[2, 2], s);
                g.concat(&[c, x, x], 1)
            }),
        ),
        (
            "slice",
            vec![3, 5, 2],
            Box::new(|g, x, _| g.slice(x, 1, 2, 3)),
        ),
        (
            "embedding",
            vec![6, 3],
            Box::new(|g, x, _| g.embedding(x, &[0, 5, 5, 2, 1, 0, 3, 3], &[2, 4])),
        ),
        ("softmax", vec![3, 6], Box::new(|g, x, _| g.softmax(x))),
        (
            "log_softmax",
            vec![3, 6],
            Box::new(|g, x, _| g.log_softmax(x)),
        ),
        ("logsumexp", vec![3, 6], Box::new(|g, x, _| g.logsumexp(x))),
        (
            "layer_norm",
            vec![4, 8],
            Box::new(|g, x, _| g.layer_norm(x, 1e-5)),
        ),
        (
            "attention-q",
            vec![2, 2, 4, 3],
            Box::new(move |g, x, s| {
                let (k, v) = (other(g, &[2, 2, 4, 3], s), other(g, &[2, 2, 4, 3], s + 1));
                g.attention(x, k, v, Some(&mask), false)
            }),
        ),
        (
            "attention-k-causal",
            vec![2, 2, 4, 3],
            Box::new(move |g, x, s| {
                let (q, v) = (other(g, &[2, 2, 4, 3], s), other(g, &[2, 2, 4, 3], s + 1));
                g.attention(q, x, v, Some(&mask), true)
            }),
        ),
        (
            "attention-v",
            vec![2, 2, 4, 3],
            Box::new(|g, x, s| {
                let (q, k) = (other(g, &[2, 2, 4, 3], s), other(g, &[2, 2, 4, 3], s + 1));
                g.attention(q, k, x, None, true)
            }),
        ),
        (
            "sum",
            vec![3, 4],
            Box::new(|g, x, _| {
                let s = g.sum(x);
                g.mul(s, s)
            }),
        ),
        (
            "mean",
            vec![3, 4],
            Box::new(|g, x, _| {
                let s = g.mean(x);
                g.mul(s, s)
            }),
        ),
        (
            "masked_mean",
            vec![2, 3, 4],
            Box::new(|g, x, _| g.masked_mean(x, &[true, false, true, true, true, false])),
        ),
        (
            "cross_entropy",
            vec![2, 3, 5],
            Box::new(|g, x, _| {
                g.cross_entropy(x, &[0, 4, 2, 1, 3, 3], &[1.0, 0.5, 0.0, 2.0, 1.0, 1.0], 0.0)
            }),
        ),
        (
            "cross_entropy-smoothed",
            vec![2, 3, 5],
            Box::new(|g, x, _| {
                g.cross_entropy(x, &[0, 4, 2, 1, 3, 3], &[1.0, 1.0, 1.0, 1.0, 0.0, 1.0], 0.1)
            }),
        ),
    ]
}

/// Finite-difference check over every parameter of an integrated model,
/// at `per_tensor` sampled coordinates of each tensor.
fn model_grad_error(model: &IntegratedModel<f64>, seed: u64, per_tensor: usize) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let src: Vec<Vec<usize>> = (0..2).map(|_| rand_seq(&mut rng, 11, 2, 5)).collect();
    let trg: Vec<Vec<usize>> = (0..2).map(|_| rand_seq(&mut rng, 12, 1, 4)).collect();
    let loss_of = |params: &ParamStore<f64>, g: &mut Graph<f64>| -> Result<(Var, Bound)> {
        let m = IntegratedModel {
            arch: model.arch.clone(),
            params: params.clone(),
        };
        let b = Bound::all(g, params);
        let s: Vec<&[usize]> = src.iter().map(Vec::as_slice).collect();
        let t: Vec<&[usize]> = trg.iter().map(Vec::as_slice).collect();
        let (loss, _) = integrated_batch_loss(g, &m, &b, &s, &t, None, 0.1, seed)?;
        Ok((loss, b))
    };
    let mut g = Graph::new(true, 0);
    let (loss, b) = loss_of(&model.params, &mut g)?;
    g.backward(loss)?;
    let grads = b.gradients(&g);
    let mut worst = 0.0f64;
    let mut probe = model.params.clone();
    let names: Vec<String> = model.params.names().map(str::to_string).collect();
    for name in names {
        let n = model.params.get(&name)?.numel();
        let analytic = grads.get(&name).ok().cloned();
        for _ in 0..per_tensor.min(n) {
            let i = rng.gen_range(0..n);
            let orig = probe.get(&name)?.data()[i];
            let a = analytic.as_ref().map_or(0.0, |t| t.data()[i]);
            let mut eval = |v: f64| -> Result<f64> {
                probe.get_mut(&name)?.data_mut()[i] = v;
                let mut g = Graph::new(true, 0);
                let (l, _) = loss_of(&probe, &mut g)?;
                Ok(g.value(l).item())
            };
            // a step straddling a ReLU kink is retried with a smaller one
            let mut best = f64::INFINITY;
            for eps in [1e-4, 1e-5, 1e-6] {
                let cd = (eval(orig + eps)? - eval(orig - eps)?) / (2.0 * eps);
                best = best.min((a - cd).abs() / a.abs().max(cd.abs()).max(1e-6));
                if best < 1e-4 {
                    break;
                }
            }
            probe.get_mut(&name)?.data_mut()[i] = orig;
            worst = worst.max(best);
        }
    }
    Ok(worst)
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut worst_op = ("", 0.0f64);
    for (name, shape, f) in op_table() {
        for seed in 0..SEEDS {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = randn(&shape, &mut rng);
            let err = ok(grad_check(
                |g, x| {
                    let y = f(g, x, seed)?;
                    project(g, y, seed)
                },
                &x,
                1e-4,
            ))?;
            ensure!(err < 1e-5, "op {name} seed {seed}: relative error {err:e}");
            if err > worst_op.1 {
                worst_op = (name, err);
            }
        }
    }
    let n_ops = op_table().len();
    let mut worst_model = 0.0f64;
    for interface in [
        InterfaceKind::DecoderStates {
            with_p2t_encoder: true,
        },
        InterfaceKind::DecoderPosteriors,
    ] {
        let arch = integrated_arch(DecoderKind::NonAutoregressive, interface, 2);
        for seed in 0..SEEDS {
            let model = ok(IntegratedModel::new(arch.clone(), arch.init_params(seed)))?;
            let err = ok(model_grad_error(&model, seed, 3))?;
            ensure!(
                err < 1e-4,
                "integrated {interface} seed {seed}: relative error {err:e}"
            );
            worst_model = worst_model.max(err);
        }
    }
    let secs = start.elapsed().as_secs_f64();
    ensure!(secs < 300.0, "gradient suite took {secs:.0}s");
    Ok(format!(
        "{n_ops} ops x {SEEDS} seeds, worst {:.1e} ({}); 2-layer integrated (states, posteriors) worst {worst_model:.1e}; {secs:.0}s",
        worst_op.1, worst_op.0
    ))
}

// ------------------------------------------------------------ criterion 2

fn criterion_2() -> Outcome {
    let mut worst = 0.0f64;
    for case in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(case);
        let piv = rng.gen_range(6..14);
        let d = [8, 16][rng.gen_range(0..2)];
        let arch = ok(IntegratedArch::new(
            tiny(DecoderKind::NonAutoregressive, 9, piv, d, 1),
            tiny(DecoderKind::Autoregressive, piv, 9, d, 2),
            InterfaceKind::DecoderPosteriors,
            LengthPolicy::Source,
            "h",
            "h",
        ))?;
        let model = ok(IntegratedModel::<f64>::new(
            arch.clone(),
            arch.init_params(case),
        ))?;
        let batch = rng.gen_range(1..4);
        let ids: Vec<Vec<usize>> = (0..batch)
            .map(|_| {
                (0..rng.gen_range(1..8))
                    .map(|_| rng.gen_range(1..piv))
                    .collect()
            })
            .collect();
        let pb = TokenBatch::from_seqs(&ids);
        let onehot = Tensor::from_fn(&[pb.batch, pb.len, piv], |i| {
            f64::from(u8::from(i % piv == pb.ids[i / piv]))
        });
        let trg: Vec<Vec<usize>> = (0..batch).map(|_| rand_seq(&mut rng, 9, 0, 4)).collect();
        let trg = TokenBatch::from_seqs(
            &trg.iter()
                .map(|t| t[..t.len() - 1].to_vec())
                .collect::<Vec<_>>(),
        );

        let mut g = Graph::inference();
        let b = Bound::all(&mut g, &model.params);
        let post = g.constant(onehot.clone());
        let soft = ok(model.soft_embedding(&mut g, &b, post))?;
        let table = ok(b.get("p2t.encoder.embed"))?;
        let discrete = ok(g.embedding(table, &pb.ids, &[pb.batch, pb.len]))?;
        ensure!(
            g.value(soft).data() == g.value(discrete).data(),
            "case {case}: soft embedding differs from the embedding lookup"
        );
        // f32 as well
        {
            let p32 = model.params.cast::<f32>();
            let mut g = Graph::<f32>::inference();
            let b = Bound::all(&mut g, &p32);
            let post = g.constant(onehot.cast());
            let m32 = ok(IntegratedModel::new(arch.clone(), p32.clone()))?;
            let soft = ok(m32.soft_embedding(&mut g, &b, post))?;
            let table = ok(b.get("p2t.encoder.embed"))?;
            let discrete = ok(g.embedding(table, &pb.ids, &[pb.batch, pb.len]))?;
            ensure!(
                g.value(soft).data() == g.value(discrete).data(),
                "case {case}: f32 soft embedding differs"
            );
        }

        let bridged = ok(model.bridge_posteriors(&mut g, &b, post, &pb.mask))?;
        let p2t = b.view("p2t.");
        let out_soft = ok(arch.p2t.decode(&mut g, &p2t, &bridged, &trg))?;
        let enc = ok(arch.p2t.encode(&mut g, &p2t, &pb))?;
        let out_ids = ok(arch.p2t.decode(&mut g, &p2t, &enc, &trg))?;
        let (x, y) = (g.value(out_soft.logits), g.value(out_ids.logits));
        let lens = trg.lengths();
        for (r, &len) in lens.iter().enumerate() {
            for pos in 0..len {
                let i = (r * trg.len + pos) * 9;
                for v in 0..9 {
                    worst = worst.max((x.data()[i + v] - y.data()[i + v]).abs());
                }
            }
        }
        ensure!(worst < 1e-5, "case {case}: p2t outputs differ by {worst:e}");
    }
    Ok(format!(
        "100 cases: embeddings bit-identical (f32, f64), p2t logits max diff {worst:.1e}"
    ))
}

// ------------------------------------------------------------ criterion 3

fn group_norms(grads: &ParamStore<f64>) -> BTreeMap<String, f64> {
    let mut out = BTreeMap::new();
    for (name, t) in grads.iter() {
        if let Some((side, part)) = group_of(name) {
            *out.entry(format!("{side}.{part}")).or_insert(0.0) += t.sq_norm();
        }
    }
    out
}

fn criterion_3() -> Outcome {
    let schemes = [
        InitScheme::NONE,
        InitScheme::S2P,
        InitScheme::P2T,
        InitScheme::ALL,
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let data = Pairs {
        src: (0..6).map(|_| rand_seq(&mut rng, 11, 2, 5)).collect(),
        trg: (0..6).map(|_| rand_seq(&mut rng, 12, 1, 4)).collect(),
    };
    let pivots: Vec<Vec<usize>> = (0..6).map(|_| rand_seq(&mut rng, 10, 1, 4)).collect();
    let mut checked = 0;
    for s2p_kind in [DecoderKind::NonAutoregressive, DecoderKind::Autoregressive] {
        let piv = (s2p_kind == DecoderKind::Autoregressive).then_some(pivots.as_slice());
        for interface in interfaces() {
            let arch = integrated_arch(s2p_kind, interface, 2);
            let s2p_ckpt = arch.s2p.init_params::<f64>(101);
            let p2t_ckpt = arch.p2t.init_params::<f64>(102);
            for scheme in schemes {
                for freeze in [
                    vec![],
                    vec!["s2p.encoder".to_string()],
                    vec!["p2t.".to_string()],
                ] {
                    let model = ok(concatenate(
                        arch.clone(),
                        Some(&s2p_ckpt),
                        Some(&p2t_ckpt),
                        scheme,
                        7,
                    ))?;
                    let frozen = |n: &str| freeze.iter().any(|f| n.starts_with(f.as_str()));
                    let mut g = Graph::new(true, 1);
                    let b = Bound::new(&mut g, &model.params, &frozen);
                    let s: Vec<&[usize]> = data.src.iter().map(Vec::as_slice).collect();
                    let t: Vec<&[usize]> = data.trg.iter().map(Vec::as_slice).collect();
                    let (loss, _) = ok(integrated_batch_loss(
                        &mut g, &model, &b, &s, &t, piv, 0.0, 0,
                    ))?;
                    ok(g.backward(loss))?;
                    let norms = group_norms(&b.gradients(&g));
                    let cfg = TrainConfig {
                        lr: 1e-3,
                        warmup: 1,
                        batch_tokens: 1000,
                        max_updates: 1,
                        eval_interval: 0,
                        freeze: freeze.clone(),
                        ..TrainConfig::finetune()
                    };
                    let out = ok(finetune_integrated(
                        &model,
                        &data,
                        piv,
                        None,
                        &cfg,
                        &mut MetricsLog::memory(),
                    ))?;
                    for group in ["s2p.encoder", "s2p.decoder"] {
                        if frozen(&format!("{group}.")) {
                            continue;
                        }
                        let norm = norms.get(group).copied().unwrap_or(0.0).sqrt();
                        ensure!(
                            norm > 0.0,
                            "{s2p_kind:?} s2p, {interface}, init {scheme}, freeze {freeze:?}: {group} gradient norm 0"
                        );
                        let moved = model
                            .params
                            .iter()
                            .filter(|(n, _)| n.starts_with(group))
                            .any(|(n, t)| out.params.get(n).unwrap().max_abs_diff(t) > 0.0);
                        ensure!(moved, "{s2p_kind:?} s2p, {interface}, init {scheme}: {group} unchanged after one step");
                        checked += 1;
                    }
                }
            }
        }
    }
    Ok(format!("{checked} (model, interface, init scheme, freeze, group) cases with non-zero s2p gradient and a moved group"))
}

// ------------------------------------------------------------ criterion 4

/// Teacher-forced log-probability of `tokens[1..]` given `tokens[0]`.
fn sequence_score(m: &Transformer, p: &ParamStore<f64>, src: &[usize], tokens: &[usize]) -> f64 {
    let mut g = Graph::inference();
    let b = Bound::all(&mut g, p);
    let view = b.view("");
    let enc = m
        .encode(&mut g, &view, &TokenBatch::from_seqs(&[src]))
        .unwrap();
    let prefix = &tokens[..tokens.len() - 1];
    let out = m
        .decode(&mut g, &view, &enc, &TokenBatch::from_seqs(&[prefix]))
        .unwrap();
    let lp = g.log_softmax(out.logits).unwrap();
    let v = m.cfg.vocab_size_tgt;
    let data = g.value(lp).data().to_vec();
    tokens[1..]
        .iter()
        .enumerate()
        .map(|(i, &t)| data[i * v + t])
        .sum()
}

fn enumerate_all(
    m: &Transformer,
    p: &ParamStore<f64>,
    src: &[usize],
    max_len: usize,
) -> Vec<Hypothesis> {
    let symbols: Vec<usize> = (0..m.cfg.vocab_size_tgt)
        .filter(|&t| t == EOS || t == UNK || t > MASK)
        .collect();
    let mut out = Vec::new();
    let mut stack = vec![vec![BOS]];
    while let Some(prefix) = stack.pop() {
        for &t in &symbols {
            let mut seq = prefix.clone();
            seq.push(t);
            let n = seq.len() - 1;
            if t == EOS || n == max_len {
                let score = sequence_score(m, p, src, &seq);
                out.push(Hypothesis {
                    cutoff: t != EOS,
                    tokens: seq,
                    score,
                    norm_score: score / n as f64,
                });
            } else {
                stack.push(seq);
            }
        }
    }
    out
}

fn criterion_4() -> Outcome {
    let (vs, vp, vt) = (12, 11, 13);
    let ar1 = tiny(DecoderKind::Autoregressive, vs, vp, 16, 2);
    let nat1 = tiny(DecoderKind::NonAutoregressive, vs, vp, 16, 2);
    let ar2 = tiny(DecoderKind::Autoregressive, vp, vt, 16, 2);
    let mut compared = 0;
    for seed in 0..10u64 {
        let (pa, pn, pb) = (
            ar1.init_params::<f64>(seed),
            nat1.init_params::<f64>(seed + 50),
            ar2.init_params::<f64>(seed + 100),
        );
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..3 {
            let src = rand_seq(&mut rng, vs, 1, 6);
            let target = BeamConfig::new(3, 12);
            // autoregressive first stage
            let cfg = TwoPassConfig {
                pivot: PivotDecoder::Beam(BeamConfig::new(3, 12)),
                target,
                length_seed: 0,
            };
            let got = ok(two_pass_decode(
                Stage::new(&ar1, &pa),
                Stage::new(&ar2, &pb),
                &src,
                &cfg,
            ))?;
            let piv = ok(decode_ar(
                Stage::new(&ar1, &pa),
                &src,
                &BeamConfig::new(3, 12),
            ))?
            .into_vec()
            .remove(0);
            let trg = ok(decode_ar(Stage::new(&ar2, &pb), &piv.framed(), &target))?
                .into_vec()
                .remove(0);
            ensure!(
                got == (piv, trg),
                "AR two-pass differs from sequential decoding (seed {seed})"
            );
            // non-autoregressive first stage
            for t in [1, 4] {
                let cfg = TwoPassConfig {
                    pivot: PivotDecoder::MaskPredict {
                        iterations: t,
                        length: LengthPolicy::Predicted,
                    },
                    target,
                    length_seed: 0,
                };
                let got = ok(two_pass_decode(
                    Stage::new(&nat1, &pn),
                    Stage::new(&ar2, &pb),
                    &src,
                    &cfg,
                ))?;
                let k = ok(nat_lengths(
                    Stage::new(&nat1, &pn),
                    std::slice::from_ref(&src),
                    LengthPolicy::Predicted,
                    None,
                    0,
                ))?[0];
                let piv = ok(mask_predict(&nat1, &pn, &src, t, k))?;
                let trg = ok(decode_ar(Stage::new(&ar2, &pb), &piv.framed(), &target))?
                    .into_vec()
                    .remove(0);
                ensure!(
                    got == (piv, trg),
                    "NAT(T={t}) two-pass differs from sequential decoding (seed {seed})"
                );
            }
            // beam 1 = greedy
            let mut s1 = ok(ArScorer::from_source(&ar1, &pa, &src))?;
            let mut s2 = ok(ArScorer::from_source(&ar1, &pa, &src))?;
            let beam = ok(beam_search(&mut s1, &BeamConfig::greedy(10)))?;
            let greedy = ok(greedy_rollout(&mut s2, 10))?;
            ensure!(
                beam.best() == Some(&greedy),
                "beam=1 differs from greedy rollout (seed {seed})"
            );
            compared += 1;
        }
    }
    // 3-token toy model: specials + {a, b, c}
    let toy = tiny(DecoderKind::Autoregressive, 8, 8, 8, 1);
    let max_len = 4;
    let mut searched = 0;
    for seed in 0..20u64 {
        let p = toy.init_params::<f64>(seed).cast::<f64>();
        let p = scale_logits(p, 4.0);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let src = rand_seq(&mut rng, 8, 1, 3);
        let mut all = enumerate_all(&toy, &p, &src, max_len);
        let total = all.len();
        for normalize in [true, false] {
            let key = |h: &Hypothesis| if normalize { h.norm_score } else { h.score };
            all.sort_by(|a, b| key(b).total_cmp(&key(a)));
            let cfg = BeamConfig {
                beam_size: total,
                n_best: 10,
                max_len,
                normalize,
            };
            let got = ok(decode_ar(Stage::new(&toy, &p), &src, &cfg))?;
            for (g, e) in got.hyps().iter().zip(&all) {
                ensure!(
                    g.tokens == e.tokens && (g.score - e.score).abs() < 1e-9,
                    "seed {seed}: beam {:?} ({}) vs brute force {:?} ({})",
                    g.tokens,
                    g.score,
                    e.tokens,
                    e.score
                );
            }
            // a narrow beam never beats the exhaustive optimum
            let narrow = ok(decode_ar(
                Stage::new(&toy, &p),
                &src,
                &BeamConfig {
                    beam_size: 2,
                    n_best: 1,
                    max_len,
                    normalize,
                },
            ))?;
            ensure!(
                key(narrow.best().unwrap()) <= key(&all[0]) + 1e-12,
                "seed {seed}: beam 2 beats brute force"
            );
        }
        searched += 1;
    }
    Ok(format!(
        "{compared} sources: two-pass = sequential (AR, NAT T=1/4), beam 1 = greedy; {searched} toy models: exhaustive beam = brute force top-10"
    ))
}

/// Sharpens the output layer so the toy distributions are far from uniform.
fn scale_logits(mut p: ParamStore<f64>, by: f64) -> ParamStore<f64> {
    let names: Vec<String> = p
        .names()
        .filter(|n| n.starts_with("decoder.out"))
        .map(str::to_string)
        .collect();
    for n in names {
        for x in p.get_mut(&n).unwrap().data_mut() {
            *x *= by;
        }
    }
    p
}

// -------------------------------------------------------- toy experiments

const TOY_UPDATES_AR: usize = 1200;
const TOY_UPDATES_NAT: usize = 350;

struct Toy {
    task: SyntheticTask,
    vocab: Vocabulary,
    ar: Transformer,
    nat: Transformer,
    s2p_ar: ParamStore<f32>,
    p2t_ar: ParamStore<f32>,
    /// p2t snapshot at half the budget, still clearly imperfect
    p2t_mid: ParamStore<f32>,
    s2p_nat: ParamStore<f32>,
    secs: f64,
}

static TOY: OnceLock<Toy> = OnceLock::new();

fn toy_model_cfg(v: usize) -> TransformerConfig {
    TransformerConfig {
        d_model: 32,
        n_heads: 4,
        d_ff: 64,
        n_enc_layers: 2,
        n_dec_layers: 2,
        dropout: 0.0,
        max_positions: 128,
        vocab_size_src: v,
        vocab_size_tgt: v,
    }
}

fn toy_pretrain(updates: usize, seed: u64) -> TrainConfig {
    TrainConfig {
        lr: 4e-3,
        warmup: 200,
        batch_tokens: 512,
        max_updates: updates,
        eval_interval: 0,
        label_smoothing: 0.0,
        seed,
        ..TrainConfig::pretrain()
    }
}

fn toy_finetune(updates: usize) -> TrainConfig {
    TrainConfig {
        lr: 5e-4,
        warmup: 50,
        batch_tokens: 512,
        max_updates: updates,
        eval_interval: 50,
        eval_beam: 1,
        ..TrainConfig::finetune()
    }
}

impl Toy {
    fn side(&self, split: &str, side: &str) -> &[String] {
        let c = match split {
            "s2p" => &self.task.src_piv,
            "p2t" => &self.task.piv_trg,
            "direct" => &self.task.src_trg,
            "dev" => &self.task.dev,
            _ => &self.task.test,
        };
        c.side(side).unwrap()
    }

    fn pairs(&self, split: &str, a: &str, b: &str) -> Pairs {
        Pairs::encode(
            self.side(split, a),
            self.side(split, b),
            &self.vocab,
            &self.vocab,
        )
        .unwrap()
    }

    fn dev(&self, a: &str, b: &str) -> DevSet {
        DevSet::new(
            self.side("dev", a),
            self.side("dev", b),
            &self.vocab,
            &self.vocab,
        )
        .unwrap()
    }

    fn encode(&self, lines: &[String]) -> Vec<Vec<usize>> {
        lines.iter().map(|l| self.vocab.encode_line(l)).collect()
    }

    fn arch(&self, interface: InterfaceKind, length: LengthPolicy) -> IntegratedArch {
        IntegratedArch::new(
            self.nat.clone(),
            self.ar.clone(),
            interface,
            length,
            self.vocab.hash(),
            self.vocab.hash(),
        )
        .unwrap()
    }

    fn two_pass_bleu(&self, s2p: Stage<f32>, pivot: PivotDecoder) -> f64 {
        let srcs = self.encode(self.side("test", "src"));
        let cfg = TwoPassConfig {
            pivot,
            target: BeamConfig::new(4, 30),
            length_seed: 0,
        };
        let out = two_pass_decode_batch(
            s2p,
            Stage::new(&self.ar, &self.p2t_ar),
            &srcs,
            &cfg,
            None,
            None,
        )
        .unwrap();
        let hyps: Vec<String> = out
            .iter()
            .map(|(_, t)| self.vocab.decode_line(&t.tokens))
            .collect();
        corpus_bleu(&hyps, self.side("test", "trg")).unwrap().bleu
    }
}

fn toy() -> &'static Toy {
    TOY.get_or_init(|| {
        let start = Instant::now();
        let spec = TaskSpec {
            pretrain_size: 2000,
            direct_size: 1000,
            dev_size: 100,
            test_size: 200,
            ..TaskSpec::default()
        };
        let task = make_synthetic_task(&spec, 7).unwrap();
        let vocab = build_vocab(task.all_sides(), 1).unwrap();
        let cfg = toy_model_cfg(vocab.len());
        let ar = Transformer::new(cfg.clone(), DecoderKind::Autoregressive).unwrap();
        let nat = Transformer::new(cfg, DecoderKind::NonAutoregressive).unwrap();
        let mut toy = Toy {
            task,
            vocab,
            ar,
            nat,
            s2p_ar: ParamStore::new(),
            p2t_ar: ParamStore::new(),
            p2t_mid: ParamStore::new(),
            s2p_nat: ParamStore::new(),
            secs: 0.0,
        };
        let log = &mut MetricsLog::memory();
        let (s2p, p2t) = (
            toy.pairs("s2p", "src", "piv"),
            toy.pairs("p2t", "piv", "trg"),
        );
        toy.s2p_ar = pretrain_ar(
            &toy.ar,
            toy.ar.init_params(1),
            &s2p,
            None,
            &toy_pretrain(TOY_UPDATES_AR, 1),
            log,
        )
        .unwrap()
        .params;
        let cfg = TrainConfig {
            snapshots: vec![TOY_UPDATES_AR / 2],
            ..toy_pretrain(TOY_UPDATES_AR, 2)
        };
        let mut out = pretrain_ar(&toy.ar, toy.ar.init_params(2), &p2t, None, &cfg, log).unwrap();
        toy.p2t_mid = out.snapshots.remove(0).1;
        toy.p2t_ar = out.params;
        toy.s2p_nat = pretrain_nat(
            &toy.nat,
            toy.nat.init_params(3),
            &s2p,
            None,
            &toy_pretrain(TOY_UPDATES_NAT, 3),
            log,
        )
        .unwrap()
        .params;
        toy.secs = start.elapsed().as_secs_f64();
        println!(
            "  (toy pre-training: vocab {}, {:.0}s)",
            toy.vocab.len(),
            toy.secs
        );
        toy
    })
}

// ------------------------------------------------------------ criterion 5

fn criterion_5() -> Outcome {
    let start = Instant::now();
    let t = toy();
    ensure!(
        t.vocab.len() <= 64,
        "toy vocabulary has {} types",
        t.vocab.len()
    );
    let ar = t.two_pass_bleu(
        Stage::new(&t.ar, &t.s2p_ar),
        PivotDecoder::Beam(BeamConfig::new(4, 30)),
    );
    let nat = |iterations| {
        t.two_pass_bleu(
            Stage::new(&t.nat, &t.s2p_nat),
            PivotDecoder::MaskPredict {
                iterations,
                length: LengthPolicy::Predicted,
            },
        )
    };
    let (t1, t5) = (nat(1), nat(5));
    let dev = t.dev("src", "trg");
    let direct = t.pairs("direct", "src", "trg");
    let mut gains = Vec::new();
    for interface in [
        InterfaceKind::DecoderPosteriors,
        InterfaceKind::DecoderStates {
            with_p2t_encoder: true,
        },
    ] {
        let model = concatenate(
            t.arch(interface, LengthPolicy::Predicted),
            Some(&t.s2p_nat),
            Some(&t.p2t_ar),
            InitScheme::ALL,
            1,
        )
        .unwrap();
        let before = eval_integrated(&model, &dev, 1).unwrap();
        let out = finetune_integrated(
            &model,
            &direct,
            None,
            Some(&dev),
            &toy_finetune(300),
            &mut MetricsLog::memory(),
        )
        .unwrap();
        let after = out.best.map_or(before, |(_, b)| b);
        gains.push((interface, before, after));
    }
    let secs = start.elapsed().as_secs_f64() + t.secs;
    let tuned: Vec<String> = gains
        .iter()
        .map(|(i, b, a)| format!("{i} {b:.1}->{a:.1}"))
        .collect();
    let detail = format!(
        "(a) two-pass AR {ar:.1}; (b) NAT T=1 {t1:.1} < T=5 {t5:.1}; (c) {}; {secs:.0}s",
        tuned.join(", ")
    );
    ensure!(ar > 90.0, "(a) failed: {detail}");
    ensure!(t1 < t5, "(b) failed: {detail}");
    ensure!(
        gains.iter().any(|(_, b, a)| a - b >= 1.0),
        "(c) failed: {detail}"
    );
    ensure!(secs < 1800.0, "over 30 minutes: {detail}");
    Ok(detail)
}

// ------------------------------------------------------------ criterion 6

fn propagation(
    t: &Toy,
    s2p: &ParamStore<f32>,
    p2t: &ParamStore<f32>,
    noise: Vec<f64>,
    oracle_n: usize,
) -> SweepResult {
    let spec = PropagationSpec {
        s2p: Stage::new(&t.ar, s2p),
        weaker: vec![],
        p2t: Stage::new(&t.ar, p2t),
        piv_out: &t.vocab,
        piv_in: &t.vocab,
        trg: &t.vocab,
        beam: 4,
        noise,
        oracle_n,
        seed: 0,
        config_hash: String::new(),
    };
    let test = ThreeWaySet {
        src: t.encode(t.side("test", "src")),
        piv_refs: t.side("test", "piv").to_vec(),
        trg_refs: t.side("test", "trg").to_vec(),
    };
    error_propagation_sweep(&spec, &test).unwrap()
}

fn criterion_6() -> Outcome {
    let t = toy();
    let grid = [0.0, 0.05, 0.1, 0.2];
    let sweep = propagation(t, &t.s2p_ar, &t.p2t_ar, grid.to_vec(), 0);
    let e2e: Vec<f64> = grid
        .iter()
        .map(|p| sweep.row(&format!("noise={p}")).unwrap().e2e_bleu)
        .collect();
    let shown: Vec<String> = e2e.iter().map(|b| format!("{b:.1}")).collect();
    ensure!(
        e2e.windows(2).all(|w| w[1] <= w[0]),
        "end-to-end BLEU over noise {grid:?} not non-increasing: {shown:?}"
    );

    let s2p = t.pairs("s2p", "src", "piv");
    let mut passed = 0;
    let mut seeds = Vec::new();
    for seed in 0..5u64 {
        let weak = pretrain_ar(
            &t.ar,
            t.ar.init_params(20 + seed),
            &s2p,
            None,
            &toy_pretrain(300, 20 + seed),
            &mut MetricsLog::memory(),
        )
        .unwrap()
        .params;
        let r = propagation(t, &weak, &t.p2t_mid, vec![], 10);
        let (base, oracle) = (r.row("baseline").unwrap(), r.row("oracle-10best").unwrap());
        let dp = oracle.pivot_bleu.unwrap() - base.pivot_bleu.unwrap();
        let de = oracle.e2e_bleu - base.e2e_bleu;
        if dp >= de && de >= 0.0 {
            passed += 1;
        }
        seeds.push(format!("{:.1}/{:.1}", dp, de));
    }
    ensure!(
        passed >= 4,
        "oracle pivot/e2e gains per seed {seeds:?}: {passed}/5 with pivot >= e2e >= 0"
    );
    Ok(format!(
        "e2e over noise {shown:?}; oracle pivot/e2e gains {seeds:?}, {passed}/5 seeds ordered"
    ))
}

// ------------------------------------------------------------ criterion 7

fn criterion_7() -> Outcome {
    let t = toy();
    let direct = t.pairs("direct", "src", "trg");
    let dev = t.dev("src", "trg");
    let run = |kind: StudyKind, updates: usize| {
        let spec = StudySpec {
            arch: t.arch(InterfaceKind::DecoderPosteriors, LengthPolicy::Predicted),
            s2p_ckpt: &t.s2p_nat,
            p2t_ckpt: &t.p2t_ar,
            scheme: InitScheme::ALL,
            train: &direct,
            pivots: None,
            dev: &dev,
            cfg: toy_finetune(updates),
            seed: 1,
            config_hash: String::new(),
        };
        study_sweeps(kind, &spec).unwrap()
    };
    let bleu = |r: &SweepResult, c: &str| r.row(c).unwrap().e2e_bleu;

    let data = run(StudyKind::DataSize, 200);
    let by_fraction: Vec<f64> = ["fraction=0.1", "fraction=0.3", "fraction=0.5", "fraction=1"]
        .iter()
        .map(|c| bleu(&data, c))
        .collect();
    let init = run(StudyKind::InitScheme, 200);
    let length = run(StudyKind::LengthPolicy, 200);
    let (both, none) = (bleu(&init, "both"), bleu(&init, "none"));
    let (source, random) = (bleu(&length, "source"), bleu(&length, "random"));
    let fr: Vec<String> = by_fraction.iter().map(|b| format!("{b:.1}")).collect();
    let detail = format!(
        "data 10/30/50/100% {fr:?}; init both {both:.1} vs none {none:.1}; length source {source:.1} vs random {random:.1}"
    );
    ensure!(
        by_fraction.windows(2).all(|w| w[1] >= w[0]),
        "data-size not monotone: {detail}"
    );
    ensure!(both >= none, "init direction: {detail}");
    ensure!(source >= random, "length direction: {detail}");
    Ok(detail)
}

// ------------------------------------------------------------ criterion 8

fn determinism_run(dir: &std::path::Path, nat: bool) -> Result<ParamStore<f64>> {
    let v = Vocabulary::from_tokens(["a", "b", "c", "d", "e", "f"])?;
    let lines: Vec<String> = ["a b c", "d e f a", "c c b", "f e", "a d b e", "b f c"]
        .map(String::from)
        .to_vec();
    let rev: Vec<String> = lines
        .iter()
        .map(|l| l.split(' ').rev().collect::<Vec<_>>().join(" "))
        .collect();
    let data = Pairs::encode(&lines, &rev, &v, &v)?;
    let dev = DevSet::new(&lines[..3], &rev[..3], &v, &v)?;
    let kind = if nat {
        DecoderKind::NonAutoregressive
    } else {
        DecoderKind::Autoregressive
    };
    let m = Transformer::new(
        TransformerConfig {
            dropout: 0.1,
            ..tiny(kind, v.len(), v.len(), 16, 1).cfg
        },
        kind,
    )?;
    let cfg = TrainConfig {
        lr: 3e-3,
        warmup: 5,
        batch_tokens: 24,
        accum_steps: 2,
        max_updates: 12,
        eval_interval: 4,
        seed: 5,
        ..TrainConfig::pretrain()
    };
    let mut log = MetricsLog::to_dir(dir)?;
    let out = if nat {
        pretrain_nat(&m, m.init_params(1), &data, Some(&dev), &cfg, &mut log)?
    } else {
        pretrain_ar(&m, m.init_params(1), &data, Some(&dev), &cfg, &mut log)?
    };
    drop(log);
    save_checkpoint(&out.params, &dir.join("model.ckpt"))?;
    Ok(out.params)
}

fn criterion_8() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let read =
        |p: std::path::PathBuf| std::fs::read(&p).map_err(|e| format!("{}: {e}", p.display()));
    for nat in [false, true] {
        let (a, b) = (
            tmp.path().join(format!("a{nat}")),
            tmp.path().join(format!("b{nat}")),
        );
        ok(determinism_run(&a, nat))?;
        ok(determinism_run(&b, nat))?;
        let (ja, jb) = (
            read(a.join("metrics.jsonl"))?,
            read(b.join("metrics.jsonl"))?,
        );
        ensure!(
            !ja.is_empty() && ja == jb,
            "metrics.jsonl differs between identical runs (nat={nat})"
        );
        ensure!(
            String::from_utf8_lossy(&ja).contains("\"dev\""),
            "no dev rows in metrics.jsonl"
        );
        ensure!(
            read(a.join("model.ckpt"))? == read(b.join("model.ckpt"))?,
            "checkpoints differ between runs"
        );
    }
    // save / load / save
    let m = tiny(DecoderKind::NonAutoregressive, 9, 9, 8, 2);
    for seed in 0..5 {
        let p64 = m.init_params::<f64>(seed);
        let p32 = m.init_params::<f32>(seed);
        let (f1, f2) = (tmp.path().join("x1.ckpt"), tmp.path().join("x2.ckpt"));
        ok(save_checkpoint(&p64, &f1))?;
        let back: ParamStore<f64> = ok(load_checkpoint(&f1))?.cast();
        ensure!(
            back == p64.cast::<f32>().cast::<f64>(),
            "f64 checkpoint does not load as the f32-rounded values"
        );
        ok(save_checkpoint(&back, &f2))?;
        ensure!(
            read(f1.clone())? == read(f2.clone())?,
            "f64 save/load/save not byte-identical"
        );
        let bytes = ok(encode_checkpoint(&p32))?;
        let again = ok(encode_checkpoint(
            &ok(decode_checkpoint(&bytes))?.cast::<f32>(),
        ))?;
        ensure!(bytes == again, "f32 save/load/save not byte-identical");
    }
    // vocabulary guard
    let (va, vb) = (
        Vocabulary::from_tokens(["x", "y"]).unwrap(),
        Vocabulary::from_tokens(["x", "z"]).unwrap(),
    );
    let arch = |i| {
        IntegratedArch::new(
            tiny(DecoderKind::NonAutoregressive, 9, 7, 8, 1),
            tiny(DecoderKind::Autoregressive, 7, 9, 8, 1),
            i,
            LengthPolicy::Source,
            va.hash(),
            vb.hash(),
        )
    };
    match arch(InterfaceKind::DecoderPosteriors) {
        Err(e @ Error::VocabMismatch { .. }) => {
            let msg = e.to_string();
            ensure!(
                msg.contains(va.hash()) && msg.contains(vb.hash()),
                "guard message lacks the hashes: {msg}"
            );
            ensure!(
                e.exit_code() == 2,
                "vocabulary mismatch exit code {}",
                e.exit_code()
            );
        }
        other => {
            return Err(format!(
                "posteriors assembly over different vocabularies gave {other:?}"
            ))
        }
    }
    ensure!(
        arch(InterfaceKind::DecoderStates {
            with_p2t_encoder: true
        })
        .is_ok(),
        "states interface rejected"
    );
    Ok("metrics.jsonl and checkpoints bit-exact over reruns (f64, AR and NAT); save/load/save byte-identical; posteriors vocabulary guard exits 2".into())
}

// ------------------------------------------------------------ criterion 9

/// BLEU from plain nested loops over token lists.
fn brute_bleu(hyps: &[String], refs: &[String]) -> f64 {
    let mut matches = [0usize; 4];
    let mut totals = [0usize; 4];
    let mut ref_totals = [0usize; 4];
    let (mut hl, mut rl) = (0, 0);
    for (h, r) in hyps.iter().zip(refs) {
        let h: Vec<&str> = h.split_whitespace().collect();
        let r: Vec<&str> = r.split_whitespace().collect();
        hl += h.len();
        rl += r.len();
        for n in 1..=4 {
            let hg: Vec<&[&str]> = if h.len() >= n {
                (0..=h.len() - n).map(|i| &h[i..i + n]).collect()
            } else {
                vec![]
            };
            let rg: Vec<&[&str]> = if r.len() >= n {
                (0..=r.len() - n).map(|i| &r[i..i + n]).collect()
            } else {
                vec![]
            };
            totals[n - 1] += hg.len();
            ref_totals[n - 1] += rg.len();
            let mut seen: Vec<&[&str]> = Vec::new();
            for g in &hg {
                if seen.contains(g) {
                    continue;
                }
                seen.push(g);
                let ch = hg.iter().filter(|x| *x == g).count();
                let cr = rg.iter().filter(|x| *x == g).count();
                matches[n - 1] += ch.min(cr);
            }
        }
    }
    if hl == 0 {
        return if rl == 0 { 100.0 } else { 0.0 };
    }
    let mut logs = Vec::new();
    for n in 0..4 {
        if totals[n] == 0 && ref_totals[n] == 0 {
            continue;
        }
        if matches[n] == 0 {
            return 0.0;
        }
        logs.push((matches[n] as f64 / totals[n] as f64).ln());
    }
    let bp = if hl > rl {
        1.0
    } else {
        (1.0 - rl as f64 / hl as f64).exp()
    };
    (100.0 * bp * (logs.iter().sum::<f64>() / logs.len() as f64).exp()).min(100.0)
}

fn criterion_9() -> Outcome {
    let mut worst = 0.0f64;
    let mut nonzero = 0;
    for seed in 0..50u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let words = rng.gen_range(2..7);
        let line = |rng: &mut ChaCha8Rng, lo: usize| -> String {
            (0..rng.gen_range(lo..12))
                .map(|_| format!("w{}", rng.gen_range(0..words)))
                .collect::<Vec<_>>()
                .join(" ")
        };
        let n = rng.gen_range(1..25);
        let refs: Vec<String> = (0..n).map(|_| line(&mut rng, 0)).collect();
        let hyps: Vec<String> = refs
            .iter()
            .map(|r| {
                if rng.gen_bool(0.3) {
                    r.clone()
                } else {
                    line(&mut rng, 0)
                }
            })
            .collect();
        let got = ok(corpus_bleu(&hyps, &refs))?.bleu;
        let want = brute_bleu(&hyps, &refs);
        worst = worst.max((got - want).abs());
        ensure!(
            (got - want).abs() < 1e-9,
            "corpus {seed}: {got} vs brute force {want}"
        );
        if want > 0.0 {
            nonzero += 1;
        }
    }
    Ok(format!(
        "50 corpora ({nonzero} with non-zero BLEU), max |diff| {worst:.1e}"
    ))
}

// ------------------------------------------------------------------ main

fn main() {
    let wanted: Vec<usize> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let criteria: [Criterion; 9] = [
        ("gradient suite", criterion_1),
        ("one-hot equivalence", criterion_2),
        ("gradient-flow contract", criterion_3),
        ("composition identity", criterion_4),
        ("toy end-to-end trend", criterion_5),
        ("error-propagation direction", criterion_6),
        ("sweep directions", criterion_7),
        ("determinism and formats", criterion_8),
        ("BLEU oracle", criterion_9),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let n = i + 1;
        if !wanted.is_empty() && !wanted.contains(&n) {
            continue;
        }
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("criterion {n} {name}: PASS [{secs:.1}s] {detail}"),
            Err(detail) => {
                failed += 1;
                println!("criterion {n} {name}: FAIL [{secs:.1}s] {detail}");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
