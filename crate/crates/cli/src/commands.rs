use std::path::Path;

use cascade_core::cascade::{concatenate, IntegratedArch, IntegratedModel, LengthPolicy};
use cascade_core::config::{ExperimentConfig, TrainStage};
use cascade_core::data::{build_vocab, make_synthetic_task, read_lines, write_lines, Vocabulary};
use cascade_core::decoding::{
    decode_ar, decode_integrated, decode_pivots, remap_ids, BeamConfig, Hypothesis,
    IntegratedDecodeConfig, PivotDecoder, Stage,
};
use cascade_core::evaluation::{
    corpus_bleu, error_propagation_sweep, noise_lines, study_sweeps, PropagationSpec, StudyKind,
    StudySpec, ThreeWaySet,
};
use cascade_core::nnet::{DecoderKind, ParamStore, Transformer};
use cascade_core::training::{
    distill_corpus, finetune_integrated, generate_synthetic_pivots, max_decode_len, pretrain_ar,
    pretrain_nat, DevSet, MetricsLog, Pairs,
};
use cascade_core::{Error, Result, Scalar};

use crate::bundle::{Bundle, ModelMeta};
use crate::run::RunDir;
use crate::{Cli, Command, Mode, SweepKind, TrainData};

macro_rules! with_precision {
    ($cfg:expr, $f:ident($($arg:expr),*)) => {
        if $cfg.f64_mode()? {
            $f::<f64>($($arg),*)
        } else {
            $f::<f32>($($arg),*)
        }
    };
}

fn lines(path: &Path) -> Result<Vec<String>> {
    read_lines(path)
}

fn aligned(a: &Path, b: &Path) -> Result<(Vec<String>, Vec<String>)> {
    let (x, y) = (lines(a)?, lines(b)?);
    if x.len() != y.len() {
        return Err(Error::Data(format!(
            "{} has {} lines but {} has {}",
            a.display(),
            x.len(),
            b.display(),
            y.len()
        )));
    }
    Ok((x, y))
}

fn pairs(src: &Path, trg: &Path, sv: &Vocabulary, tv: &Vocabulary) -> Result<Pairs> {
    let (s, t) = aligned(src, trg)?;
    Pairs::encode(&s, &t, sv, tv)
}

fn dev_set(data: &TrainData, sv: &Vocabulary, tv: &Vocabulary) -> Result<Option<DevSet>> {
    match (&data.dev_src, &data.dev_ref) {
        (Some(s), Some(r)) => {
            let (s, r) = aligned(s, r)?;
            Ok(Some(DevSet::new(&s, &r, sv, tv)?))
        }
        (None, None) => Ok(None),
        _ => Err(Error::Config("--dev-src and --dev-ref go together".into())),
    }
}

fn encode_all(lines: &[String], v: &Vocabulary) -> Vec<Vec<usize>> {
    lines.iter().map(|l| v.encode_line(l)).collect()
}

fn first(list: Vec<Hypothesis>) -> Result<Hypothesis> {
    list.into_iter()
        .next()
        .ok_or_else(|| Error::Numeric("empty n-best list".into()))
}

pub fn run(cli: &Cli) -> Result<()> {
    let mut cfg = match &cli.common.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    for s in &cli.common.set {
        cfg.set_pair(s)?;
    }
    let invocation = format!("{:?}", cli.cmd);
    let force = cli.common.force;
    let claim = |cfg: &ExperimentConfig, out: &Path| RunDir::claim(out, cfg, &invocation, force);
    match &cli.cmd {
        Command::GenData { task, seed, out } => {
            if let Some(t) = task {
                cfg.set("data.task", t)?;
            }
            if let Some(s) = seed {
                cfg.set("data.seed", &s.to_string())?;
            }
            let run = claim(&cfg, out)?;
            let task = make_synthetic_task(&cfg.task()?, cfg.parse("data.seed")?)?;
            task.save(&run.dir)?;
            run.finish(&cfg)
        }
        Command::BuildVocab { inputs, out } => {
            let run = claim(&cfg, out)?;
            let sides = inputs
                .iter()
                .map(|p| lines(p))
                .collect::<Result<Vec<_>>>()?;
            let v = build_vocab(
                sides.iter().map(Vec::as_slice),
                cfg.parse("data.min_count")?,
            )?;
            v.save(&run.path("vocab.txt"))?;
            println!("{} types, hash {}", v.len(), v.hash());
            run.finish(&cfg)
        }
        Command::PretrainAr {
            data,
            src_vocab,
            trg_vocab,
            out,
        }
        | Command::PretrainNat {
            data,
            src_vocab,
            trg_vocab,
            out,
        } => {
            let kind = if matches!(cli.cmd, Command::PretrainAr { .. }) {
                DecoderKind::Autoregressive
            } else {
                DecoderKind::NonAutoregressive
            };
            let run = claim(&cfg, out)?;
            let sv = Vocabulary::load(src_vocab)?;
            let tv = match trg_vocab {
                Some(p) => Vocabulary::load(p)?,
                None => sv.clone(),
            };
            with_precision!(cfg, pretrain(&cfg, kind, data, sv, tv, &run))?;
            run.finish(&cfg)
        }
        Command::Concat {
            s2p,
            p2t,
            interface,
            init,
            length,
            out,
        } => {
            for (key, v) in [
                ("interface.kind", interface),
                ("interface.init", init),
                ("length.policy", length),
            ] {
                if let Some(v) = v {
                    cfg.set(key, v)?;
                }
            }
            let run = claim(&cfg, out)?;
            with_precision!(cfg, concat(&cfg, s2p, p2t, &run))?;
            run.finish(&cfg)
        }
        Command::Finetune {
            model,
            data,
            pivots,
            out,
        } => {
            let run = claim(&cfg, out)?;
            with_precision!(cfg, finetune(&cfg, model, data, pivots.as_deref(), &run))?;
            run.finish(&cfg)
        }
        Command::Translate {
            mode,
            model,
            p2t,
            input,
            iterations,
            beam,
            length,
            refs,
            out,
        } => {
            if let Some(t) = iterations {
                cfg.set("decode.iterations", &t.to_string())?;
            }
            if let Some(b) = beam {
                cfg.set("decode.beam", &b.to_string())?;
            }
            if let Some(l) = length {
                cfg.set("length.policy", l)?;
            }
            let run = claim(&cfg, out)?;
            let t = Translate {
                mode: *mode,
                model,
                p2t: p2t.as_deref(),
                input,
                refs: refs.as_deref(),
                length_given: length.is_some(),
            };
            with_precision!(cfg, translate(&cfg, &t, &run))?;
            run.finish(&cfg)
        }
        Command::SyntheticPivots {
            model,
            input,
            beam,
            out,
        }
        | Command::Distill {
            model,
            input,
            beam,
            out,
        } => {
            if let Some(b) = beam {
                cfg.set("decode.beam", &b.to_string())?;
            }
            let run = claim(&cfg, out)?;
            let distill = matches!(cli.cmd, Command::Distill { .. });
            with_precision!(cfg, generate(&cfg, model, input, distill, &run))?;
            run.finish(&cfg)
        }
        Command::Score {
            hyp,
            reference,
            out,
        } => {
            let (h, r) = aligned(hyp, reference)?;
            let rep = corpus_bleu(&h, &r)?;
            let p: Vec<String> = rep
                .precisions
                .iter()
                .map(|x| format!("{:.1}", 100.0 * x))
                .collect();
            println!(
                "BLEU = {:.2} {} (BP = {:.3}, hyp_len = {}, ref_len = {})",
                rep.bleu,
                p.join("/"),
                rep.brevity_penalty,
                rep.hyp_len,
                rep.ref_len
            );
            if let Some(out) = out {
                let run = claim(&cfg, out)?;
                let json = serde_json::json!({
                    "bleu": rep.bleu,
                    "precisions": rep.precisions,
                    "matches": rep.matches,
                    "totals": rep.totals,
                    "brevity_penalty": rep.brevity_penalty,
                    "hyp_len": rep.hyp_len,
                    "ref_len": rep.ref_len,
                });
                let path = run.path("bleu.json");
                std::fs::write(&path, format!("{json}\n")).map_err(|e| Error::io(&path, e))?;
                run.finish(&cfg)?;
            }
            Ok(())
        }
        Command::Noise {
            input,
            p,
            seed,
            out,
        } => {
            let run = claim(&cfg, out)?;
            write_lines(
                &run.path("noisy.txt"),
                &noise_lines(&lines(input)?, *p, *seed)?,
            )?;
            run.finish(&cfg)
        }
        Command::Sweep {
            kind,
            s2p,
            p2t,
            src,
            piv,
            trg,
            dev_src,
            dev_ref,
            pivots,
            noise,
            oracle_n,
            out,
        } => {
            let run = claim(&cfg, out)?;
            let s = SweepArgs {
                kind: *kind,
                s2p,
                p2t,
                src,
                piv: piv.as_deref(),
                trg,
                dev_src: dev_src.as_deref(),
                dev_ref: dev_ref.as_deref(),
                pivots: pivots.as_deref(),
                noise,
                oracle_n: *oracle_n,
            };
            with_precision!(cfg, sweep(&cfg, &s, &run))?;
            run.finish(&cfg)
        }
    }
}

fn pretrain<T: Scalar>(
    cfg: &ExperimentConfig,
    kind: DecoderKind,
    data: &TrainData,
    sv: Vocabulary,
    tv: Vocabulary,
    run: &RunDir,
) -> Result<()> {
    let model = Transformer::new(cfg.transformer(sv.len(), tv.len())?, kind)?;
    let stage = match kind {
        DecoderKind::Autoregressive => TrainStage::PretrainAr,
        DecoderKind::NonAutoregressive => TrainStage::PretrainNat,
    };
    let mut tc = cfg.train(stage)?;
    // weaker checkpoints for the error-propagation study
    for u in [tc.max_updates / 4, tc.max_updates / 2] {
        if u > 0 && !tc.snapshots.contains(&u) {
            tc.snapshots.push(u);
        }
    }
    let train = pairs(&data.src, &data.trg, &sv, &tv)?;
    let dev = dev_set(data, &sv, &tv)?;
    let mut log = MetricsLog::to_dir(&run.dir)?;
    let init = model.init_params::<T>(tc.seed);
    let out = match kind {
        DecoderKind::Autoregressive => {
            pretrain_ar(&model, init, &train, dev.as_ref(), &tc, &mut log)?
        }
        DecoderKind::NonAutoregressive => {
            pretrain_nat(&model, init, &train, dev.as_ref(), &tc, &mut log)?
        }
    };
    let b = Bundle::new(&run.dir, ModelMeta::single(&model), sv, tv, None);
    b.write()?;
    b.save_params("best", &out.params)?;
    b.save_params("last", &out.last)?;
    for (u, p) in &out.snapshots {
        b.save_params(&format!("snapshot-{u}"), p)?;
    }
    if let Some((u, bleu)) = out.best {
        log::info!("best dev BLEU {bleu:.2} at update {u}");
    }
    Ok(())
}

fn concat<T: Scalar>(cfg: &ExperimentConfig, s2p: &Path, p2t: &Path, run: &RunDir) -> Result<()> {
    let (a, b) = (Bundle::open(s2p)?, Bundle::open(p2t)?);
    let arch = IntegratedArch::new(
        a.transformer()?,
        b.transformer()?,
        cfg.interface()?,
        cfg.length_policy()?,
        a.trg.hash(),
        b.src.hash(),
    )?;
    let scheme = cfg.init_scheme()?;
    let s2p_params: Option<ParamStore<T>> = if scheme.s2p_encoder || scheme.s2p_decoder {
        Some(a.params("best")?)
    } else {
        None
    };
    let p2t_params: Option<ParamStore<T>> = if scheme.p2t_encoder || scheme.p2t_decoder {
        Some(b.params("best")?)
    } else {
        None
    };
    let meta = ModelMeta::integrated(&arch);
    let model = concatenate(
        arch,
        s2p_params.as_ref(),
        p2t_params.as_ref(),
        scheme,
        cfg.parse("train.seed")?,
    )?;
    let out = Bundle::new(
        &run.dir,
        meta,
        a.src.clone(),
        b.trg.clone(),
        Some(a.trg.clone()),
    );
    out.write()?;
    out.save_params("best", &model.params)
}

fn finetune<T: Scalar>(
    cfg: &ExperimentConfig,
    dir: &Path,
    data: &TrainData,
    pivots: Option<&Path>,
    run: &RunDir,
) -> Result<()> {
    let b = Bundle::open(dir)?;
    let model = IntegratedModel::new(b.arch()?, b.params::<T>("best")?)?;
    let piv_vocab = b.piv.clone().unwrap_or_else(|| b.trg.clone());
    let train = pairs(&data.src, &data.trg, &b.src, &b.trg)?;
    let pivots = match pivots {
        Some(p) => {
            let l = lines(p)?;
            if l.len() != train.len() {
                return Err(Error::Data(format!(
                    "{} has {} lines for {} training pairs",
                    p.display(),
                    l.len(),
                    train.len()
                )));
            }
            Some(encode_all(&l, &piv_vocab))
        }
        None => None,
    };
    let dev = dev_set(data, &b.src, &b.trg)?;
    let tc = cfg.train(TrainStage::Finetune)?;
    let mut log = MetricsLog::to_dir(&run.dir)?;
    let out = finetune_integrated(
        &model,
        &train,
        pivots.as_deref(),
        dev.as_ref(),
        &tc,
        &mut log,
    )?;
    let nb = Bundle::new(
        &run.dir,
        b.meta.clone(),
        b.src.clone(),
        b.trg.clone(),
        b.piv.clone(),
    );
    nb.write()?;
    nb.save_params("best", &out.params)?;
    nb.save_params("last", &out.last)?;
    for (u, p) in &out.snapshots {
        nb.save_params(&format!("snapshot-{u}"), p)?;
    }
    Ok(())
}

struct Translate<'a> {
    mode: Mode,
    model: &'a Path,
    p2t: Option<&'a Path>,
    input: &'a Path,
    refs: Option<&'a Path>,
    length_given: bool,
}

fn ref_lengths(refs: Option<&Path>, v: &Vocabulary, n: usize) -> Result<Option<Vec<usize>>> {
    let Some(p) = refs else { return Ok(None) };
    let l = lines(p)?;
    if l.len() != n {
        return Err(Error::Data(format!(
            "{} has {} lines for {n} inputs",
            p.display(),
            l.len()
        )));
    }
    Ok(Some(l.iter().map(|x| v.encode_line(x).len()).collect()))
}

/// Best pivot of one source under a single first-stage model.
fn pivot_of<T: Scalar>(
    stage: Stage<T>,
    src: &[usize],
    cfg: &ExperimentConfig,
    policy: LengthPolicy,
    ref_len: Option<usize>,
) -> Result<Hypothesis> {
    let decoder = match stage.model.kind {
        DecoderKind::Autoregressive => PivotDecoder::Beam(BeamConfig::new(
            cfg.parse("decode.beam")?,
            max_decode_len(src.len(), stage.model),
        )),
        DecoderKind::NonAutoregressive => PivotDecoder::MaskPredict {
            iterations: cfg.parse("decode.iterations")?,
            length: policy,
        },
    };
    let refs = ref_len.map(|r| vec![r]);
    first(decode_pivots(
        stage,
        &[src.to_vec()],
        &decoder,
        refs.as_deref(),
        cfg.parse("decode.seed")?,
    )?)
}

fn translate<T: Scalar>(cfg: &ExperimentConfig, t: &Translate, run: &RunDir) -> Result<()> {
    let input = lines(t.input)?;
    let beam: usize = cfg.parse("decode.beam")?;
    let policy = cfg.length_policy()?;
    let (hyps, pivots): (Vec<String>, Option<Vec<String>>) = match t.mode {
        Mode::Single => {
            let b = Bundle::open(t.model)?;
            let m = b.transformer()?;
            let p = b.params::<T>("best")?;
            let refs = ref_lengths(t.refs, &b.trg, input.len())?;
            let mut out = Vec::with_capacity(input.len());
            for (i, l) in input.iter().enumerate() {
                let h = pivot_of(
                    Stage::new(&m, &p),
                    &b.src.encode_line(l),
                    cfg,
                    policy,
                    refs.as_ref().map(|r| r[i]),
                )
                .map_err(|e| line_error(t.input, i, e))?;
                out.push(b.trg.decode_line(&h.tokens));
            }
            (out, None)
        }
        Mode::TwoPass => {
            let p2t_dir = t
                .p2t
                .ok_or_else(|| Error::Config("--mode two-pass needs --p2t".into()))?;
            let (a, b) = (Bundle::open(t.model)?, Bundle::open(p2t_dir)?);
            let (ma, mb) = (a.transformer()?, b.transformer()?);
            let (pa, pb) = (a.params::<T>("best")?, b.params::<T>("best")?);
            let refs = ref_lengths(t.refs, &a.trg, input.len())?;
            let (mut hyps, mut pivs) = (Vec::new(), Vec::new());
            for (i, l) in input.iter().enumerate() {
                let src = a.src.encode_line(l);
                let piv = pivot_of(
                    Stage::new(&ma, &pa),
                    &src,
                    cfg,
                    policy,
                    refs.as_ref().map(|r| r[i]),
                )
                .map_err(|e| line_error(t.input, i, e))?;
                let ids = remap_ids(&piv.framed(), &a.trg, &b.src);
                let bc = BeamConfig::new(beam, max_decode_len(src.len().max(ids.len()), &mb));
                let h = first(decode_ar(Stage::new(&mb, &pb), &ids, &bc)?.into_vec())
                    .map_err(|e| line_error(t.input, i, e))?;
                pivs.push(a.trg.decode_line(&piv.tokens));
                hyps.push(b.trg.decode_line(&h.tokens));
            }
            (hyps, Some(pivs))
        }
        Mode::Integrated => {
            let b = Bundle::open(t.model)?;
            let mut arch = b.arch()?;
            if t.length_given {
                arch.length = policy;
            }
            let model = IntegratedModel::new(arch, b.params::<T>("best")?)?;
            let refs = ref_lengths(t.refs, &b.trg, input.len())?;
            let piv_vocab = b.piv.as_ref().unwrap_or(&b.trg);
            let (mut hyps, mut pivs) = (Vec::new(), Vec::new());
            for (i, l) in input.iter().enumerate() {
                let src = b.src.encode_line(l);
                let dc = IntegratedDecodeConfig {
                    beam: BeamConfig::new(beam, max_decode_len(src.len(), &model.arch.p2t)),
                    pivot_beam: BeamConfig::new(beam, max_decode_len(src.len(), &model.arch.s2p)),
                    hard: cfg.parse("decode.hard")?,
                    iterations: cfg.parse("decode.iterations")?,
                    length_seed: cfg.parse("decode.seed")?,
                };
                let (piv, h) = decode_integrated(&model, &src, refs.as_ref().map(|r| r[i]), &dc)
                    .map_err(|e| line_error(t.input, i, e))?;
                pivs.push(piv_vocab.decode_line(&piv.tokens));
                hyps.push(b.trg.decode_line(&h.tokens));
            }
            (hyps, Some(pivs))
        }
    };
    write_lines(&run.path("hyp.txt"), &hyps)?;
    if let Some(p) = pivots {
        write_lines(&run.path("pivot.txt"), &p)?;
    }
    Ok(())
}

fn line_error(file: &Path, i: usize, e: Error) -> Error {
    let msg = format!("{} line {}: {e}", file.display(), i + 1);
    match e {
        Error::Config(_) | Error::InvalidArgument(_) => Error::Config(msg),
        Error::Numeric(_) | Error::NonFinite { .. } => Error::Numeric(msg),
        _ => Error::Data(msg),
    }
}

fn generate<T: Scalar>(
    cfg: &ExperimentConfig,
    dir: &Path,
    input: &Path,
    distill: bool,
    run: &RunDir,
) -> Result<()> {
    let b = Bundle::open(dir)?;
    let m = b.transformer()?;
    let p = b.params::<T>("best")?;
    let src_lines = lines(input)?;
    let srcs = encode_all(&src_lines, &b.src);
    let beam = cfg.parse("decode.beam")?;
    let (outputs, failed) = if distill {
        let (pairs, failed) = distill_corpus(Stage::new(&m, &p), &srcs, beam)?;
        (pairs.trg, failed)
    } else {
        let d = generate_synthetic_pivots(Stage::new(&m, &p), &srcs, beam)?;
        (d.lines, d.failed)
    };
    if !failed.is_empty() {
        let shown: Vec<String> = failed.iter().map(|i| (i + 1).to_string()).collect();
        log::warn!(
            "{} lines replaced by a placeholder: {}",
            failed.len(),
            shown.join(",")
        );
    }
    let text: Vec<String> = outputs
        .iter()
        .map(|ids| {
            let s = b.trg.decode_line(ids);
            if s.is_empty() {
                cascade_core::data::SPECIALS[cascade_core::data::UNK].to_string()
            } else {
                s
            }
        })
        .collect();
    if distill {
        write_lines(&run.path("distill.src"), &src_lines)?;
        write_lines(&run.path("distill.trg"), &text)
    } else {
        write_lines(&run.path("pivots.txt"), &text)
    }
}

struct SweepArgs<'a> {
    kind: SweepKind,
    s2p: &'a Path,
    p2t: &'a Path,
    src: &'a Path,
    piv: Option<&'a Path>,
    trg: &'a Path,
    dev_src: Option<&'a Path>,
    dev_ref: Option<&'a Path>,
    pivots: Option<&'a Path>,
    noise: &'a str,
    oracle_n: usize,
}

fn sweep<T: Scalar>(cfg: &ExperimentConfig, s: &SweepArgs, run: &RunDir) -> Result<()> {
    let (a, b) = (Bundle::open(s.s2p)?, Bundle::open(s.p2t)?);
    let (ma, mb) = (a.transformer()?, b.transformer()?);
    let (pa, pb) = (a.params::<T>("best")?, b.params::<T>("best")?);
    let result = match s.kind {
        SweepKind::ErrorProp => {
            let piv = s
                .piv
                .ok_or_else(|| Error::Data("error-prop needs pivot references (--piv)".into()))?;
            let (src, piv_refs) = aligned(s.src, piv)?;
            let (_, trg_refs) = aligned(s.src, s.trg)?;
            let noise = s
                .noise
                .split(',')
                .map(|x| {
                    x.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::Config(format!("--noise item '{x}' is not a number")))
                })
                .collect::<Result<Vec<_>>>()?;
            let snaps = a.snapshots()?;
            let weak: Vec<(String, ParamStore<T>)> = snaps
                .iter()
                .map(|(u, name)| Ok((format!("u{u}"), a.params::<T>(name)?)))
                .collect::<Result<_>>()?;
            let spec = PropagationSpec {
                s2p: Stage::new(&ma, &pa),
                weaker: weak.iter().map(|(l, p)| (l.clone(), p)).collect(),
                p2t: Stage::new(&mb, &pb),
                piv_out: &a.trg,
                piv_in: &b.src,
                trg: &b.trg,
                beam: cfg.parse("decode.beam")?,
                noise,
                oracle_n: s.oracle_n,
                seed: cfg.parse("decode.seed")?,
                config_hash: cfg.short_hash(),
            };
            let set = ThreeWaySet {
                src: encode_all(&src, &a.src),
                piv_refs,
                trg_refs,
            };
            error_propagation_sweep(&spec, &set)?
        }
        kind => {
            let kind = match kind {
                SweepKind::DataSize => StudyKind::DataSize,
                SweepKind::Init => StudyKind::InitScheme,
                _ => StudyKind::LengthPolicy,
            };
            let arch = IntegratedArch::new(
                ma,
                mb,
                cfg.interface()?,
                cfg.length_policy()?,
                a.trg.hash(),
                b.src.hash(),
            )?;
            let train = pairs(s.src, s.trg, &a.src, &b.trg)?;
            let pivots = match s.pivots {
                Some(p) => Some(encode_all(&lines(p)?, &a.trg)),
                None => None,
            };
            let (ds, dr) = match (s.dev_src, s.dev_ref) {
                (Some(x), Some(y)) => aligned(x, y)?,
                _ => {
                    return Err(Error::Config(
                        "fine-tuning sweeps need --dev-src and --dev-ref".into(),
                    ))
                }
            };
            let dev = DevSet::new(&ds, &dr, &a.src, &b.trg)?;
            let spec = StudySpec {
                arch,
                s2p_ckpt: &pa,
                p2t_ckpt: &pb,
                scheme: cfg.init_scheme()?,
                train: &train,
                pivots: pivots.as_deref(),
                dev: &dev,
                cfg: cfg.train(TrainStage::Finetune)?,
                seed: cfg.parse("train.seed")?,
                config_hash: cfg.short_hash(),
            };
            study_sweeps(kind, &spec)?
        }
    };
    result.save(&run.path("sweep.csv"))?;
    print!("{}", result.to_csv());
    Ok(())
}
