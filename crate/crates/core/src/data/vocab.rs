use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const PAD: usize = 0;
pub const BOS: usize = 1;
pub const EOS: usize = 2;
pub const UNK: usize = 3;
pub const MASK: usize = 4;

/// Surface forms of the reserved ids, in id order.
pub const SPECIALS: [&str; 5] = ["<pad>", "<s>", "</s>", "<unk>", "<mask>"];

const HEADER: &str = "#vocab v1";

pub fn is_special(id: usize) -> bool {
    id < SPECIALS.len()
}

/// Token/id bijection with the five reserved ids first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    hash: String,
}

fn content_hash(tokens: &[String]) -> String {
    let mut h = Sha256::new();
    for t in tokens {
        h.update(t.as_bytes());
        h.update(b"\n");
    }
    h.finalize()[..8].iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

impl Vocabulary {
    /// Builds from an explicit token list (specials are prepended).
    pub fn from_tokens<I, S>(tokens: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut all: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).collect();
        all.extend(tokens.into_iter().map(Into::into));
        Self::from_full_list(all)
    }

    fn from_full_list(tokens: Vec<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if t.is_empty() || t.chars().any(char::is_whitespace) {
                return Err(Error::Data(format!(
                    "invalid vocabulary token {t:?} at id {i}"
                )));
            }
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::Data(format!("duplicate vocabulary token {t:?}")));
            }
        }
        for (i, s) in SPECIALS.iter().enumerate() {
            if tokens.get(i).map(String::as_str) != Some(*s) {
                return Err(Error::Data(format!("vocabulary id {i} must be {s}")));
            }
        }
        let hash = content_hash(&tokens);
        Ok(Vocabulary {
            tokens,
            index,
            hash,
        })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.len() == SPECIALS.len()
    }

    /// Content hash; changes iff the token list or its order changes.
    pub fn hash(&self) -> &str {
        &self.hash
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// `[BOS, ids..., EOS]`; out-of-vocabulary tokens map to UNK.
    pub fn encode_line(&self, text: &str) -> Vec<usize> {
        let mut ids = vec![BOS];
        ids.extend(text.split_whitespace().map(|t| self.id(t)));
        ids.push(EOS);
        ids
    }

    /// Drops PAD/BOS/EOS/MASK; UNK keeps its surface form.
    pub fn decode_line(&self, ids: &[usize]) -> String {
        ids.iter()
            .filter(|&&i| !is_special(i) || i == UNK)
            .map(|&i| self.token(i).unwrap_or(SPECIALS[UNK]))
            .collect::<Vec<_>>()
            .join(" ")
    }

    pub fn to_file_string(&self) -> String {
        let mut s = format!("{HEADER} {}\n", self.hash);
        for t in &self.tokens {
            s.push_str(t);
            s.push('\n');
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().unwrap_or_default();
        let stated = header
            .strip_prefix(HEADER)
            .map(str::trim)
            .ok_or_else(|| Error::Data(format!("vocabulary header must start with '{HEADER}'")))?;
        let vocab = Self::from_full_list(lines.map(str::to_string).collect())?;
        if vocab.hash != stated {
            return Err(Error::Data(format!(
                "vocabulary hash {} does not match header {stated}",
                vocab.hash
            )));
        }
        Ok(vocab)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_file_string()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| Error::Data(format!("{}: {e}", path.display())))
    }
}

/// Joint frequency-sorted vocabulary over whitespace tokens of all given
/// sides. Ties are broken lexicographically so the result does not depend
/// on the order of the inputs.
pub fn build_vocab<'a, I>(sides: I, min_count: usize) -> Result<Vocabulary>
where
    I: IntoIterator<Item = &'a [String]>,
{
    let mut counts: HashMap<&str, usize> = HashMap::new();
    let mut any_side = false;
    for side in sides {
        any_side = true;
        for line in side {
            for tok in line.split_whitespace() {
                *counts.entry(tok).or_default() += 1;
            }
        }
    }
    if !any_side || counts.is_empty() {
        return Err(Error::Data(
            "cannot build a vocabulary from empty input".into(),
        ));
    }
    let mut entries: Vec<(&str, usize)> = counts
        .into_iter()
        .filter(|(t, c)| *c >= min_count.max(1) && !SPECIALS.contains(t))
        .collect();
    entries.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    Vocabulary::from_tokens(entries.into_iter().map(|(t, _)| t.to_string()))
}
