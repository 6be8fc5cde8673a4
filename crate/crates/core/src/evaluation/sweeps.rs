use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::autodiff::Scalar;
use crate::cascade::{concatenate, InitScheme, IntegratedArch, LengthPolicy};
use crate::data::{partition_rows, Vocabulary};
use crate::decoding::{decode_ar, BeamConfig, Hypothesis, Stage};
use crate::error::{Error, Result};
use crate::nnet::{DecoderKind, ParamStore};
use crate::training::{
    finetune_integrated, max_decode_len, DevSet, MetricsLog, Pairs, TrainConfig,
};

use super::bleu::corpus_bleu;
use super::noise::{noise_lines, oracle_select};

pub const SWEEP_HEADER: &str = "condition,pivot_bleu,e2e_bleu,config_hash";

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub condition: String,
    pub pivot_bleu: Option<f64>,
    pub e2e_bleu: f64,
    pub config_hash: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    pub fn row(&self, condition: &str) -> Option<&SweepRow> {
        self.rows.iter().find(|r| r.condition == condition)
    }

    pub fn to_csv(&self) -> String {
        let mut s = format!("{SWEEP_HEADER}\n");
        for r in &self.rows {
            let piv = r.pivot_bleu.map(|b| b.to_string()).unwrap_or_default();
            let _ = writeln!(s, "{},{piv},{},{}", r.condition, r.e2e_bleu, r.config_hash);
        }
        s
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

/// Test data aligned across source, pivot and target.
#[derive(Debug, Clone)]
pub struct ThreeWaySet {
    pub src: Vec<Vec<usize>>,
    pub piv_refs: Vec<String>,
    pub trg_refs: Vec<String>,
}

/// Models and settings of an error-propagation study. `s2p` is the
/// baseline first stage; `weaker` are earlier checkpoints of it.
pub struct PropagationSpec<'a, T> {
    pub s2p: Stage<'a, T>,
    pub weaker: Vec<(String, &'a ParamStore<T>)>,
    pub p2t: Stage<'a, T>,
    /// Output vocabulary of `s2p`.
    pub piv_out: &'a Vocabulary,
    /// Input vocabulary of `p2t`.
    pub piv_in: &'a Vocabulary,
    pub trg: &'a Vocabulary,
    pub beam: usize,
    pub noise: Vec<f64>,
    /// Size of the n-best list the cheating oracle chooses from (0 skips it).
    pub oracle_n: usize,
    pub seed: u64,
    pub config_hash: String,
}

fn best(hyps: Vec<Hypothesis>) -> Result<Hypothesis> {
    hyps.into_iter()
        .next()
        .ok_or_else(|| Error::Numeric("empty n-best list".into()))
}

impl<T: Scalar> PropagationSpec<'_, T> {
    fn pivots(
        &self,
        params: &ParamStore<T>,
        src: &[Vec<usize>],
        beam: usize,
    ) -> Result<Vec<String>> {
        src.iter()
            .map(|s| {
                let cfg = BeamConfig::new(beam, max_decode_len(s.len(), self.s2p.model));
                let h = best(decode_ar(Stage::new(self.s2p.model, params), s, &cfg)?.into_vec())?;
                Ok(self.piv_out.decode_line(&h.tokens))
            })
            .collect()
    }

    fn oracle_pivots(&self, test: &ThreeWaySet) -> Result<Vec<String>> {
        let render = |ids: &[usize]| self.piv_out.decode_line(ids);
        test.src
            .iter()
            .zip(&test.piv_refs)
            .map(|(s, r)| {
                let cfg = BeamConfig {
                    n_best: self.oracle_n,
                    ..BeamConfig::new(
                        self.oracle_n.max(self.beam),
                        max_decode_len(s.len(), self.s2p.model),
                    )
                };
                let list = decode_ar(self.s2p, s, &cfg)?.into_vec();
                Ok(render(&oracle_select(&list, r, &render)?.tokens))
            })
            .collect()
    }

    fn targets(&self, pivots: &[String]) -> Result<Vec<String>> {
        pivots
            .iter()
            .map(|p| {
                let ids = self.piv_in.encode_line(p);
                let cfg = BeamConfig::new(self.beam, max_decode_len(ids.len(), self.p2t.model));
                let h = best(decode_ar(self.p2t, &ids, &cfg)?.into_vec())?;
                Ok(self.trg.decode_line(&h.tokens))
            })
            .collect()
    }

    fn row(&self, condition: String, pivots: &[String], test: &ThreeWaySet) -> Result<SweepRow> {
        let trg = self.targets(pivots)?;
        Ok(SweepRow {
            condition,
            pivot_bleu: Some(corpus_bleu(pivots, &test.piv_refs)?.bleu),
            e2e_bleu: corpus_bleu(&trg, &test.trg_refs)?.bleu,
            config_hash: self.config_hash.clone(),
        })
    }
}

/// Pivot and end-to-end BLEU of a two-pass cascade under first-stage
/// degradations: the baseline, character noise on the pivot text, weaker
/// checkpoints, greedy search, and an n-best oracle that picks the pivot
/// closest to the reference.
pub fn error_propagation_sweep<T: Scalar>(
    spec: &PropagationSpec<T>,
    test: &ThreeWaySet,
) -> Result<SweepResult> {
    if spec.s2p.model.kind != DecoderKind::Autoregressive {
        return Err(Error::Config(
            "error propagation needs an autoregressive first stage".into(),
        ));
    }
    let n = test.src.len();
    if test.piv_refs.len() != n || test.trg_refs.len() != n {
        return Err(Error::Data(format!(
            "three-way set has {n} sources, {} pivot and {} target references",
            test.piv_refs.len(),
            test.trg_refs.len()
        )));
    }
    let base = spec.pivots(spec.s2p.params, &test.src, spec.beam)?;
    let mut out = SweepResult::default();
    out.rows.push(spec.row("baseline".into(), &base, test)?);
    for &p in &spec.noise {
        let noisy = noise_lines(&base, p, spec.seed)?;
        out.rows.push(spec.row(format!("noise={p}"), &noisy, test)?);
    }
    for (label, params) in &spec.weaker {
        let piv = spec.pivots(params, &test.src, spec.beam)?;
        out.rows
            .push(spec.row(format!("checkpoint={label}"), &piv, test)?);
    }
    let greedy = spec.pivots(spec.s2p.params, &test.src, 1)?;
    out.rows.push(spec.row("greedy".into(), &greedy, test)?);
    if spec.oracle_n > 0 {
        let piv = spec.oracle_pivots(test)?;
        out.rows
            .push(spec.row(format!("oracle-{}best", spec.oracle_n), &piv, test)?);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StudyKind {
    DataSize,
    InitScheme,
    LengthPolicy,
}

impl FromStr for StudyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "data-size" | "data_size" => Ok(StudyKind::DataSize),
            "init" | "init-scheme" | "init_scheme" => Ok(StudyKind::InitScheme),
            "length" | "length-policy" | "length_policy" => Ok(StudyKind::LengthPolicy),
            other => Err(Error::Config(format!(
                "unknown sweep kind '{other}' (expected error-prop, data-size, init, length)"
            ))),
        }
    }
}

/// Inputs shared by the fine-tuning studies.
pub struct StudySpec<'a, T> {
    pub arch: IntegratedArch,
    pub s2p_ckpt: &'a ParamStore<T>,
    pub p2t_ckpt: &'a ParamStore<T>,
    pub scheme: InitScheme,
    pub train: &'a Pairs,
    /// Fixed pivots for an autoregressive first stage.
    pub pivots: Option<&'a [Vec<usize>]>,
    pub dev: &'a DevSet,
    pub cfg: TrainConfig,
    pub seed: u64,
    pub config_hash: String,
}

pub const DATA_FRACTIONS: [f64; 4] = [1.0, 0.5, 0.3, 0.1];

impl<T: Scalar> StudySpec<'_, T> {
    fn run(
        &self,
        condition: String,
        arch: IntegratedArch,
        scheme: InitScheme,
        rows: Option<&[usize]>,
    ) -> Result<SweepRow> {
        let model = concatenate(
            arch,
            Some(self.s2p_ckpt),
            Some(self.p2t_ckpt),
            scheme,
            self.seed,
        )?;
        let (train, pivots) = match rows {
            Some(r) => (
                Pairs {
                    src: r.iter().map(|&i| self.train.src[i].clone()).collect(),
                    trg: r.iter().map(|&i| self.train.trg[i].clone()).collect(),
                },
                self.pivots
                    .map(|p| r.iter().map(|&i| p[i].clone()).collect::<Vec<_>>()),
            ),
            None => (self.train.clone(), self.pivots.map(<[Vec<usize>]>::to_vec)),
        };
        let out = finetune_integrated(
            &model,
            &train,
            pivots.as_deref(),
            Some(self.dev),
            &self.cfg,
            &mut MetricsLog::memory(),
        )?;
        let (_, bleu) = out
            .best
            .ok_or_else(|| Error::Data("no dev evaluation ran".into()))?;
        log::info!("{condition}: dev BLEU {bleu:.2}");
        Ok(SweepRow {
            condition,
            pivot_bleu: None,
            e2e_bleu: bleu,
            config_hash: self.config_hash.clone(),
        })
    }
}

/// Dev BLEU after fine-tuning under each condition of one study: training
/// data fractions, pre-training schemes, or pivot length policies.
pub fn study_sweeps<T: Scalar>(kind: StudyKind, spec: &StudySpec<T>) -> Result<SweepResult> {
    let mut out = SweepResult::default();
    match kind {
        StudyKind::DataSize => {
            for f in DATA_FRACTIONS {
                let rows = partition_rows(spec.train.len(), f, spec.seed)?;
                out.rows.push(spec.run(
                    format!("fraction={f}"),
                    spec.arch.clone(),
                    spec.scheme,
                    Some(&rows),
                )?);
            }
        }
        StudyKind::InitScheme => {
            for s in [
                InitScheme::NONE,
                InitScheme::S2P,
                InitScheme::P2T,
                InitScheme::ALL,
            ] {
                out.rows
                    .push(spec.run(s.label(), spec.arch.clone(), s, None)?);
            }
        }
        StudyKind::LengthPolicy => {
            if spec.arch.s2p.kind != DecoderKind::NonAutoregressive {
                return Err(Error::Config(
                    "the length study needs a non-autoregressive first stage".into(),
                ));
            }
            for l in [
                LengthPolicy::RANDOM,
                LengthPolicy::Source,
                LengthPolicy::TargetOracle,
                LengthPolicy::Predicted,
            ] {
                let mut arch = spec.arch.clone();
                arch.length = l;
                out.rows
                    .push(spec.run(l.to_string(), arch, spec.scheme, None)?);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cascade::InterfaceKind;
    use crate::nnet::{Transformer, TransformerConfig};

    fn transformer(kind: DecoderKind) -> Transformer {
        let cfg = TransformerConfig {
            d_model: 8,
            n_heads: 2,
            d_ff: 16,
            n_enc_layers: 1,
            n_dec_layers: 1,
            dropout: 0.0,
            max_positions: 24,
            vocab_size_src: 9,
            vocab_size_tgt: 9,
        };
        Transformer::new(cfg, kind).unwrap()
    }

    fn vocab() -> Vocabulary {
        Vocabulary::from_tokens(["a", "b", "c", "d"]).unwrap()
    }

    fn test_set(v: &Vocabulary) -> ThreeWaySet {
        let lines = ["a b c", "d c", "b b a d"];
        ThreeWaySet {
            src: lines.iter().map(|l| v.encode_line(l)).collect(),
            piv_refs: lines.iter().map(|s| s.to_string()).collect(),
            trg_refs: lines.iter().map(|s| s.to_string()).collect(),
        }
    }

    #[test]
    fn csv_layout() {
        let r = SweepResult {
            rows: vec![
                SweepRow {
                    condition: "noise=0.1".into(),
                    pivot_bleu: Some(50.5),
                    e2e_bleu: 40.0,
                    config_hash: "ab12".into(),
                },
                SweepRow {
                    condition: "both".into(),
                    pivot_bleu: None,
                    e2e_bleu: 1.25,
                    config_hash: "ab12".into(),
                },
            ],
        };
        assert_eq!(
            r.to_csv(),
            "condition,pivot_bleu,e2e_bleu,config_hash\nnoise=0.1,50.5,40,ab12\nboth,,1.25,ab12\n"
        );
        assert_eq!(r.row("both").unwrap().e2e_bleu, 1.25);
    }

    #[test]
    fn propagation_rows() {
        let v = vocab();
        let (m1, m2) = (
            transformer(DecoderKind::Autoregressive),
            transformer(DecoderKind::Autoregressive),
        );
        let (p1, p2, weak) = (
            m1.init_params::<f64>(1),
            m2.init_params::<f64>(2),
            m1.init_params::<f64>(3),
        );
        let spec = PropagationSpec {
            s2p: Stage::new(&m1, &p1),
            weaker: vec![("25%".into(), &weak)],
            p2t: Stage::new(&m2, &p2),
            piv_out: &v,
            piv_in: &v,
            trg: &v,
            beam: 2,
            noise: vec![0.0, 0.2],
            oracle_n: 3,
            seed: 5,
            config_hash: "h".into(),
        };
        let set = test_set(&v);
        let r = error_propagation_sweep(&spec, &set).unwrap();
        let names: Vec<&str> = r.rows.iter().map(|r| r.condition.as_str()).collect();
        assert_eq!(
            names,
            [
                "baseline",
                "noise=0",
                "noise=0.2",
                "checkpoint=25%",
                "greedy",
                "oracle-3best"
            ]
        );
        let (b, z) = (r.row("baseline").unwrap(), r.row("noise=0").unwrap());
        assert_eq!((b.pivot_bleu, b.e2e_bleu), (z.pivot_bleu, z.e2e_bleu));
        assert!(r.row("oracle-3best").unwrap().pivot_bleu >= b.pivot_bleu);
        assert_eq!(r, error_propagation_sweep(&spec, &set).unwrap());
        let mut bad = set.clone();
        bad.piv_refs.pop();
        assert!(matches!(
            error_propagation_sweep(&spec, &bad),
            Err(Error::Data(_))
        ));
    }

    #[test]
    fn init_study_runs_every_scheme() {
        let (s2p, p2t) = (
            transformer(DecoderKind::NonAutoregressive),
            transformer(DecoderKind::Autoregressive),
        );
        let (c1, c2) = (s2p.init_params::<f64>(1), p2t.init_params::<f64>(2));
        let arch = IntegratedArch::new(
            s2p,
            p2t,
            InterfaceKind::DecoderPosteriors,
            LengthPolicy::Source,
            "h",
            "h",
        )
        .unwrap();
        let v = vocab();
        let set = test_set(&v);
        let rows: Vec<Vec<usize>> = set.src.iter().cycle().take(12).cloned().collect();
        let train = Pairs {
            src: rows.clone(),
            trg: rows,
        };
        let dev = DevSet {
            src: set.src.clone(),
            ref_ids: set.src.clone(),
            refs: set.trg_refs.clone(),
            vocab: v.clone(),
        };
        let spec = StudySpec {
            arch,
            s2p_ckpt: &c1,
            p2t_ckpt: &c2,
            scheme: InitScheme::ALL,
            train: &train,
            pivots: None,
            dev: &dev,
            cfg: TrainConfig {
                max_updates: 1,
                batch_tokens: 64,
                ..TrainConfig::finetune()
            },
            seed: 3,
            config_hash: "h".into(),
        };
        let r = study_sweeps(StudyKind::InitScheme, &spec).unwrap();
        let names: Vec<&str> = r.rows.iter().map(|r| r.condition.as_str()).collect();
        assert_eq!(names, ["none", "s2p", "p2t", "both"]);
        let r = study_sweeps(StudyKind::LengthPolicy, &spec).unwrap();
        assert_eq!(r.rows.len(), 4);
        assert!(r
            .rows
            .iter()
            .all(|x| x.pivot_bleu.is_none() && (0.0..=100.0).contains(&x.e2e_bleu)));
        assert_eq!(
            study_sweeps(StudyKind::DataSize, &spec).unwrap().rows.len(),
            4
        );
        assert!(matches!(
            "error-prop".parse::<StudyKind>(),
            Err(Error::Config(_))
        ));
    }
}
