use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Line-aligned text for two or three languages.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParallelCorpus {
    labels: Vec<String>,
    sides: Vec<Vec<String>>,
}

impl ParallelCorpus {
    /// Aligns the given sides. Rows where any side is empty after
    /// whitespace tokenisation are dropped (and logged).
    pub fn new(sides: Vec<(String, Vec<String>)>) -> Result<Self> {
        if sides.is_empty() {
            return Err(Error::Data("corpus needs at least one side".into()));
        }
        let n = sides[0].1.len();
        if let Some((label, lines)) = sides.iter().find(|(_, l)| l.len() != n) {
            return Err(Error::Data(format!(
                "side '{label}' has {} lines, expected {n} (side '{}')",
                lines.len(),
                sides[0].0
            )));
        }
        let keep: Vec<bool> = (0..n)
            .map(|i| {
                sides
                    .iter()
                    .all(|(_, l)| l[i].split_whitespace().next().is_some())
            })
            .collect();
        for (i, k) in keep.iter().enumerate() {
            if !k {
                log::warn!("dropping empty line {} of corpus", i + 1);
            }
        }
        let mut labels = Vec::new();
        let mut out = Vec::new();
        for (label, lines) in sides {
            labels.push(label);
            out.push(
                lines
                    .into_iter()
                    .zip(&keep)
                    .filter(|(_, &k)| k)
                    .map(|(l, _)| normalise(&l))
                    .collect(),
            );
        }
        Ok(ParallelCorpus { labels, sides: out })
    }

    pub fn len(&self) -> usize {
        self.sides[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn side(&self, label: &str) -> Result<&[String]> {
        self.labels
            .iter()
            .position(|l| l == label)
            .map(|i| self.sides[i].as_slice())
            .ok_or_else(|| {
                Error::Data(format!(
                    "corpus has no side '{label}' (have {:?})",
                    self.labels
                ))
            })
    }

    pub fn side_at(&self, i: usize) -> &[String] {
        &self.sides[i]
    }

    /// Restricts to the named sides, in the given order.
    pub fn project(&self, labels: &[&str]) -> Result<ParallelCorpus> {
        let sides = labels
            .iter()
            .map(|l| Ok((l.to_string(), self.side(l)?.to_vec())))
            .collect::<Result<Vec<_>>>()?;
        Ok(ParallelCorpus {
            labels: sides.iter().map(|s| s.0.clone()).collect(),
            sides: sides.into_iter().map(|s| s.1).collect(),
        })
    }

    pub fn select(&self, rows: &[usize]) -> ParallelCorpus {
        ParallelCorpus {
            labels: self.labels.clone(),
            sides: self
                .sides
                .iter()
                .map(|s| rows.iter().map(|&r| s[r].clone()).collect())
                .collect(),
        }
    }

    /// Reads one file per side; labels are taken from `labels`.
    pub fn load(files: &[(&str, &Path)]) -> Result<Self> {
        let sides = files
            .iter()
            .map(|(label, path)| Ok((label.to_string(), read_lines(path)?)))
            .collect::<Result<Vec<_>>>()?;
        Self::new(sides)
    }

    /// Writes `<prefix>.<label>` per side.
    pub fn save(&self, dir: &Path, prefix: &str) -> Result<()> {
        for (label, lines) in self.labels.iter().zip(&self.sides) {
            write_lines(&dir.join(format!("{prefix}.{label}")), lines)?;
        }
        Ok(())
    }
}

fn normalise(line: &str) -> String {
    line.split_whitespace().collect::<Vec<_>>().join(" ")
}

pub fn read_lines(path: &Path) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text.lines().map(str::to_string).collect())
}

pub fn write_lines(path: &Path, lines: &[String]) -> Result<()> {
    let mut text = String::with_capacity(lines.iter().map(|l| l.len() + 1).sum());
    for l in lines {
        text.push_str(l);
        text.push('\n');
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Uniform random subset of `round(fraction * len)` rows, kept in corpus
/// order. Subsets drawn with the same seed are nested: a smaller fraction
/// always selects a subset of a larger one.
pub fn partition_corpus(
    corpus: &ParallelCorpus,
    fraction: f64,
    seed: u64,
) -> Result<ParallelCorpus> {
    Ok(corpus.select(&partition_rows(corpus.len(), fraction, seed)?))
}

/// Row indices selected by [`partition_corpus`] for a corpus of `n` lines.
pub fn partition_rows(n: usize, fraction: f64, seed: u64) -> Result<Vec<usize>> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "fraction {fraction} outside (0, 1]"
        )));
    }
    let take = (fraction * n as f64).round() as usize;
    if take == 0 {
        return Err(Error::Data(format!(
            "fraction {fraction} of {n} lines selects nothing"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut rows = order[..take].to_vec();
    rows.sort_unstable();
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use std::collections::HashSet;

    use super::*;

    fn corpus(n: usize) -> ParallelCorpus {
        ParallelCorpus::new(vec![
            ("src".into(), (0..n).map(|i| format!("s{i}")).collect()),
            ("trg".into(), (0..n).map(|i| format!("t{i}")).collect()),
        ])
        .unwrap()
    }

    #[test]
    fn misaligned_sides_rejected() {
        let err = ParallelCorpus::new(vec![
            ("src".into(), vec!["a".into(), "b".into()]),
            ("trg".into(), vec!["a".into()]),
        ])
        .unwrap_err();
        assert!(err.to_string().contains("trg"));
    }

    #[test]
    fn empty_rows_dropped_on_all_sides() {
        let c = ParallelCorpus::new(vec![
            ("src".into(), vec!["a".into(), "  ".into(), "c  d".into()]),
            ("trg".into(), vec!["x".into(), "y".into(), "z".into()]),
        ])
        .unwrap();
        assert_eq!(c.side("src").unwrap(), ["a", "c d"]);
        assert_eq!(c.side("trg").unwrap(), ["x", "z"]);
    }

    #[test]
    fn full_fraction_is_identity() {
        let c = corpus(37);
        assert_eq!(partition_corpus(&c, 1.0, 4).unwrap(), c);
    }

    #[test]
    fn half_of_hundred() {
        let p = partition_corpus(&corpus(100), 0.5, 4).unwrap();
        assert_eq!(p.len(), 50);
        // alignment survives
        for (s, t) in p.side("src").unwrap().iter().zip(p.side("trg").unwrap()) {
            assert_eq!(s[1..], t[1..]);
        }
    }

    #[test]
    fn nested_samples() {
        let c = corpus(200);
        for seed in 0..10 {
            let small: HashSet<_> = partition_corpus(&c, 0.1, seed)
                .unwrap()
                .side("src")
                .unwrap()
                .to_vec()
                .into_iter()
                .collect();
            let mid: HashSet<_> = partition_corpus(&c, 0.3, seed)
                .unwrap()
                .side("src")
                .unwrap()
                .to_vec()
                .into_iter()
                .collect();
            let big: HashSet<_> = partition_corpus(&c, 0.5, seed)
                .unwrap()
                .side("src")
                .unwrap()
                .to_vec()
                .into_iter()
                .collect();
            assert!(small.is_subset(&mid) && mid.is_subset(&big));
        }
    }

    #[test]
    fn zero_lines_rejected() {
        assert!(partition_corpus(&corpus(3), 0.1, 0).is_err());
        assert!(partition_corpus(&corpus(3), 0.0, 0).is_err());
    }
}
