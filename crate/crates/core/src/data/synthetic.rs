//! Deterministic toy translation tasks with a known pivot.
//!
//! Every task draws random source sentences over a small alphabet, maps
//! them to the pivot with an invertible function `g` and the pivot to the
//! target with an invertible function `h`.

use std::collections::HashSet;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::corpus::ParallelCorpus;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskKind {
    /// `g` and `h` are the identity.
    Copy,
    /// Token-wise substitution on both hops.
    Cipher,
    /// Substitution plus reversal inside fixed windows (`window` tokens on
    /// the first hop, 2 on the second).
    CipherReorder,
    /// Substitution where a fixed subset of pivot types is doubled.
    LengthChange,
}

impl FromStr for TaskKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "copy" => Ok(TaskKind::Copy),
            "cipher" | "substitution-cipher" => Ok(TaskKind::Cipher),
            "cipher-reorder" | "cipher+reorder" | "cipher+local-reordering" => Ok(TaskKind::CipherReorder),
            "length-change" => Ok(TaskKind::LengthChange),
            other => Err(Error::Config(format!(
                "unknown task generator '{other}' (expected copy, cipher, cipher-reorder, length-change)"
            ))),
        }
    }
}

impl TaskKind {
    pub fn name(self) -> &'static str {
        match self {
            TaskKind::Copy => "copy",
            TaskKind::Cipher => "cipher",
            TaskKind::CipherReorder => "cipher-reorder",
            TaskKind::LengthChange => "length-change",
        }
    }

    /// Whether source, pivot and target always have equal lengths.
    pub fn preserves_length(self) -> bool {
        !matches!(self, TaskKind::LengthChange)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskSpec {
    pub kind: TaskKind,
    /// Number of word types per language.
    pub alphabet: usize,
    pub min_len: usize,
    pub max_len: usize,
    /// Reordering window of the first hop (1..=3).
    pub window: usize,
    /// Fraction of pivot types that are doubled (length-change task).
    pub dup_rate: f64,
    /// Lines in each of the src→piv and piv→trg pre-training corpora.
    pub pretrain_size: usize,
    /// Lines in the direct src→trg corpus.
    pub direct_size: usize,
    pub dev_size: usize,
    pub test_size: usize,
}

impl Default for TaskSpec {
    fn default() -> Self {
        TaskSpec {
            kind: TaskKind::CipherReorder,
            alphabet: 12,
            min_len: 3,
            max_len: 8,
            window: 3,
            dup_rate: 0.25,
            pretrain_size: 2000,
            direct_size: 1000,
            dev_size: 100,
            test_size: 200,
        }
    }
}

impl TaskSpec {
    fn validate(&self) -> Result<()> {
        if self.alphabet == 0 || self.min_len == 0 || self.min_len > self.max_len {
            return Err(Error::Config(format!(
                "task needs alphabet > 0 and 0 < min_len <= max_len, got {} / {}..{}",
                self.alphabet, self.min_len, self.max_len
            )));
        }
        if !(1..=3).contains(&self.window) {
            return Err(Error::Config(format!(
                "reordering window {} outside 1..=3",
                self.window
            )));
        }
        if !(0.0..=1.0).contains(&self.dup_rate) {
            return Err(Error::Config(format!(
                "dup_rate {} outside [0,1]",
                self.dup_rate
            )));
        }
        Ok(())
    }
}

/// The secret mapping behind a generated task.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskKey {
    pub kind: TaskKind,
    pub window: usize,
    /// Source type `i` becomes pivot type `pivot_perm[i]`.
    pub pivot_perm: Vec<usize>,
    /// Pivot type `j` becomes target type `target_perm[j]`.
    pub target_perm: Vec<usize>,
    /// Pivot types that are written twice (length-change task).
    pub doubled: Vec<bool>,
}

fn reverse_windows(seq: &mut [usize], window: usize) {
    for chunk in seq.chunks_mut(window.max(1)) {
        chunk.reverse();
    }
}

fn invert(perm: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; perm.len()];
    for (i, &p) in perm.iter().enumerate() {
        inv[p] = i;
    }
    inv
}

impl TaskKey {
    fn prefixes(&self) -> (&'static str, &'static str, &'static str) {
        match self.kind {
            TaskKind::Copy => ("a", "a", "a"),
            _ => ("a", "b", "c"),
        }
    }

    pub fn pivot_of(&self, src: &[usize]) -> Vec<usize> {
        match self.kind {
            TaskKind::Copy => src.to_vec(),
            TaskKind::Cipher => src.iter().map(|&t| self.pivot_perm[t]).collect(),
            TaskKind::CipherReorder => {
                let mut p: Vec<usize> = src.iter().map(|&t| self.pivot_perm[t]).collect();
                reverse_windows(&mut p, self.window);
                p
            }
            TaskKind::LengthChange => {
                let mut p = Vec::with_capacity(src.len() * 2);
                for &t in src {
                    let v = self.pivot_perm[t];
                    p.push(v);
                    if self.doubled[v] {
                        p.push(v);
                    }
                }
                p
            }
        }
    }

    pub fn target_of(&self, piv: &[usize]) -> Vec<usize> {
        match self.kind {
            TaskKind::Copy => piv.to_vec(),
            TaskKind::Cipher | TaskKind::LengthChange => {
                piv.iter().map(|&t| self.target_perm[t]).collect()
            }
            TaskKind::CipherReorder => {
                let mut t: Vec<usize> = piv.iter().map(|&t| self.target_perm[t]).collect();
                reverse_windows(&mut t, 2);
                t
            }
        }
    }

    /// Inverse of [`TaskKey::pivot_of`].
    pub fn source_of(&self, piv: &[usize]) -> Vec<usize> {
        let inv = invert(&self.pivot_perm);
        match self.kind {
            TaskKind::Copy => piv.to_vec(),
            TaskKind::Cipher => piv.iter().map(|&t| inv[t]).collect(),
            TaskKind::CipherReorder => {
                let mut p = piv.to_vec();
                reverse_windows(&mut p, self.window);
                p.iter().map(|&t| inv[t]).collect()
            }
            TaskKind::LengthChange => {
                let mut out = Vec::with_capacity(piv.len());
                let mut i = 0;
                while i < piv.len() {
                    out.push(inv[piv[i]]);
                    i += if self.doubled[piv[i]] { 2 } else { 1 };
                }
                out
            }
        }
    }

    pub fn render(&self, side: Side, seq: &[usize]) -> String {
        let (s, p, t) = self.prefixes();
        let prefix = match side {
            Side::Source => s,
            Side::Pivot => p,
            Side::Target => t,
        };
        seq.iter()
            .map(|i| format!("{prefix}{i}"))
            .collect::<Vec<_>>()
            .join(" ")
    }

    /// Parses a rendered line back to type indices; unknown words fail.
    pub fn parse(&self, side: Side, line: &str) -> Option<Vec<usize>> {
        let (s, p, t) = self.prefixes();
        let prefix = match side {
            Side::Source => s,
            Side::Pivot => p,
            Side::Target => t,
        };
        line.split_whitespace()
            .map(|w| {
                w.strip_prefix(prefix)?
                    .parse::<usize>()
                    .ok()
                    .filter(|&i| i < self.pivot_perm.len())
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Source,
    Pivot,
    Target,
}

/// All corpora of a generated task.
#[derive(Debug, Clone)]
pub struct SyntheticTask {
    pub spec: TaskSpec,
    pub key: TaskKey,
    /// Pre-training data for the first hop (`src`, `piv`).
    pub src_piv: ParallelCorpus,
    /// Pre-training data for the second hop (`piv`, `trg`).
    pub piv_trg: ParallelCorpus,
    /// Direct data (`src`, `trg`) for fine-tuning.
    pub src_trg: ParallelCorpus,
    /// Three-way dev set (`src`, `piv`, `trg`).
    pub dev: ParallelCorpus,
    /// Three-way test set (`src`, `piv`, `trg`).
    pub test: ParallelCorpus,
}

/// Generates every split of a task; identical `(spec, seed)` gives
/// identical corpora. Source sentences never repeat across splits.
pub fn make_synthetic_task(spec: &TaskSpec, seed: u64) -> Result<SyntheticTask> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pivot_perm: Vec<usize> = (0..spec.alphabet).collect();
    pivot_perm.shuffle(&mut rng);
    let mut target_perm: Vec<usize> = (0..spec.alphabet).collect();
    target_perm.shuffle(&mut rng);
    let n_doubled = (spec.dup_rate * spec.alphabet as f64).round() as usize;
    let mut doubled = vec![false; spec.alphabet];
    let mut types: Vec<usize> = (0..spec.alphabet).collect();
    types.shuffle(&mut rng);
    for &t in &types[..n_doubled] {
        doubled[t] = true;
    }
    let key = TaskKey {
        kind: spec.kind,
        window: spec.window,
        pivot_perm,
        target_perm,
        doubled,
    };

    let capacity: f64 = (spec.min_len..=spec.max_len)
        .map(|l| (spec.alphabet as f64).powi(l as i32))
        .sum();
    let needed = 2 * spec.pretrain_size + spec.direct_size + spec.dev_size + spec.test_size;
    if (needed as f64) > 0.5 * capacity {
        return Err(Error::Config(format!(
            "task space of {capacity} sentences too small for {needed} distinct lines"
        )));
    }

    let mut seen = HashSet::new();
    let mut draw = |n: usize, rng: &mut ChaCha8Rng| -> Vec<Vec<usize>> {
        let mut out = Vec::with_capacity(n);
        while out.len() < n {
            let len = rng.gen_range(spec.min_len..=spec.max_len);
            let s: Vec<usize> = (0..len).map(|_| rng.gen_range(0..spec.alphabet)).collect();
            if seen.insert(s.clone()) {
                out.push(s);
            }
        }
        out
    };
    let dev = draw(spec.dev_size, &mut rng);
    let test = draw(spec.test_size, &mut rng);
    let s2p = draw(spec.pretrain_size, &mut rng);
    let p2t = draw(spec.pretrain_size, &mut rng);
    let direct = draw(spec.direct_size, &mut rng);

    let corpus = |rows: &[Vec<usize>], sides: &[Side]| -> Result<ParallelCorpus> {
        let mut cols: Vec<(String, Vec<String>)> = sides
            .iter()
            .map(|s| (side_label(*s).to_string(), Vec::with_capacity(rows.len())))
            .collect();
        for src in rows {
            let piv = key.pivot_of(src);
            let trg = key.target_of(&piv);
            for (col, side) in cols.iter_mut().zip(sides) {
                let seq = match side {
                    Side::Source => src,
                    Side::Pivot => &piv,
                    Side::Target => &trg,
                };
                col.1.push(key.render(*side, seq));
            }
        }
        ParallelCorpus::new(cols)
    };
    use Side::*;
    Ok(SyntheticTask {
        spec: spec.clone(),
        src_piv: corpus(&s2p, &[Source, Pivot])?,
        piv_trg: corpus(&p2t, &[Pivot, Target])?,
        src_trg: corpus(&direct, &[Source, Target])?,
        dev: corpus(&dev, &[Source, Pivot, Target])?,
        test: corpus(&test, &[Source, Pivot, Target])?,
        key,
    })
}

pub fn side_label(side: Side) -> &'static str {
    match side {
        Side::Source => "src",
        Side::Pivot => "piv",
        Side::Target => "trg",
    }
}

impl SyntheticTask {
    /// Writes `s2p.train.*`, `p2t.train.*`, `direct.train.*`, `dev.*`, `test.*`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.src_piv.save(dir, "s2p.train")?;
        self.piv_trg.save(dir, "p2t.train")?;
        self.src_trg.save(dir, "direct.train")?;
        self.dev.save(dir, "dev")?;
        self.test.save(dir, "test")?;
        Ok(())
    }

    /// All lines of every split, for joint vocabulary construction.
    pub fn all_sides(&self) -> Vec<&[String]> {
        let mut out = Vec::new();
        for c in [
            &self.src_piv,
            &self.piv_trg,
            &self.src_trg,
            &self.dev,
            &self.test,
        ] {
            for i in 0..c.labels().len() {
                out.push(c.side_at(i));
            }
        }
        out
    }
}
