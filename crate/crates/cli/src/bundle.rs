//! On-disk model directories: `meta.json`, vocabularies and `checkpoints/`.

use std::path::{Path, PathBuf};

use cascade_core::cascade::{load_checkpoint, save_checkpoint, IntegratedArch};
use cascade_core::data::Vocabulary;
use cascade_core::nnet::{DecoderKind, ParamStore, Transformer, TransformerConfig};
use cascade_core::{Error, Result, Scalar};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dims {
    pub d_model: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    pub n_enc_layers: usize,
    pub n_dec_layers: usize,
    pub dropout: f64,
    pub max_positions: usize,
    pub vocab_size_src: usize,
    pub vocab_size_tgt: usize,
}

impl From<&TransformerConfig> for Dims {
    fn from(c: &TransformerConfig) -> Self {
        Dims {
            d_model: c.d_model,
            n_heads: c.n_heads,
            d_ff: c.d_ff,
            n_enc_layers: c.n_enc_layers,
            n_dec_layers: c.n_dec_layers,
            dropout: c.dropout,
            max_positions: c.max_positions,
            vocab_size_src: c.vocab_size_src,
            vocab_size_tgt: c.vocab_size_tgt,
        }
    }
}

impl Dims {
    pub fn config(&self) -> TransformerConfig {
        TransformerConfig {
            d_model: self.d_model,
            n_heads: self.n_heads,
            d_ff: self.d_ff,
            n_enc_layers: self.n_enc_layers,
            n_dec_layers: self.n_dec_layers,
            dropout: self.dropout,
            max_positions: self.max_positions,
            vocab_size_src: self.vocab_size_src,
            vocab_size_tgt: self.vocab_size_tgt,
        }
    }

    fn transformer(&self, kind: DecoderKind) -> Result<Transformer> {
        Transformer::new(self.config(), kind)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ModelMeta {
    Ar {
        model: Dims,
    },
    Nat {
        model: Dims,
    },
    Integrated {
        s2p: Dims,
        s2p_nat: bool,
        p2t: Dims,
        interface: String,
        length: String,
    },
}

impl ModelMeta {
    pub fn single(m: &Transformer) -> Self {
        let model = Dims::from(&m.cfg);
        match m.kind {
            DecoderKind::Autoregressive => ModelMeta::Ar { model },
            DecoderKind::NonAutoregressive => ModelMeta::Nat { model },
        }
    }

    pub fn integrated(a: &IntegratedArch) -> Self {
        ModelMeta::Integrated {
            s2p: Dims::from(&a.s2p.cfg),
            s2p_nat: a.s2p.kind == DecoderKind::NonAutoregressive,
            p2t: Dims::from(&a.p2t.cfg),
            interface: a.interface.name().to_string(),
            length: a.length.to_string(),
        }
    }
}

const META: &str = "meta.json";

/// A model directory opened for reading.
#[derive(Debug, Clone)]
pub struct Bundle {
    pub dir: PathBuf,
    pub meta: ModelMeta,
    pub src: Vocabulary,
    pub trg: Vocabulary,
    /// Pivot vocabulary of an integrated model.
    pub piv: Option<Vocabulary>,
}

fn vocab_path(dir: &Path, side: &str) -> PathBuf {
    dir.join(format!("{side}.vocab"))
}

pub fn checkpoint_path(dir: &Path, name: &str) -> PathBuf {
    dir.join("checkpoints").join(format!("{name}.ckpt"))
}

impl Bundle {
    pub fn new(
        dir: &Path,
        meta: ModelMeta,
        src: Vocabulary,
        trg: Vocabulary,
        piv: Option<Vocabulary>,
    ) -> Self {
        Bundle {
            dir: dir.to_path_buf(),
            meta,
            src,
            trg,
            piv,
        }
    }

    /// Writes the metadata and vocabularies (checkpoints are saved separately).
    pub fn write(&self) -> Result<()> {
        std::fs::create_dir_all(self.dir.join("checkpoints"))
            .map_err(|e| Error::io(&self.dir, e))?;
        let path = self.dir.join(META);
        let json =
            serde_json::to_string_pretty(&self.meta).map_err(|e| Error::Data(e.to_string()))?;
        std::fs::write(&path, json + "\n").map_err(|e| Error::io(&path, e))?;
        self.src.save(&vocab_path(&self.dir, "src"))?;
        self.trg.save(&vocab_path(&self.dir, "trg"))?;
        if let Some(p) = &self.piv {
            p.save(&vocab_path(&self.dir, "piv"))?;
        }
        Ok(())
    }

    pub fn open(dir: &Path) -> Result<Self> {
        let path = dir.join(META);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let meta: ModelMeta = serde_json::from_str(&text)
            .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
        let piv = match meta {
            ModelMeta::Integrated { .. } => Some(Vocabulary::load(&vocab_path(dir, "piv"))?),
            _ => None,
        };
        Ok(Bundle {
            dir: dir.to_path_buf(),
            meta,
            src: Vocabulary::load(&vocab_path(dir, "src"))?,
            trg: Vocabulary::load(&vocab_path(dir, "trg"))?,
            piv,
        })
    }

    pub fn save_params<T: Scalar>(&self, name: &str, params: &ParamStore<T>) -> Result<()> {
        save_checkpoint(params, &checkpoint_path(&self.dir, name))
    }

    pub fn params<T: Scalar>(&self, name: &str) -> Result<ParamStore<T>> {
        Ok(load_checkpoint(&checkpoint_path(&self.dir, name))?.cast())
    }

    /// The single model of an `ar` or `nat` directory.
    pub fn transformer(&self) -> Result<Transformer> {
        match &self.meta {
            ModelMeta::Ar { model } => model.transformer(DecoderKind::Autoregressive),
            ModelMeta::Nat { model } => model.transformer(DecoderKind::NonAutoregressive),
            ModelMeta::Integrated { .. } => Err(Error::Config(format!(
                "{} holds an integrated model; a single model is needed",
                self.dir.display()
            ))),
        }
    }

    pub fn arch(&self) -> Result<IntegratedArch> {
        match &self.meta {
            ModelMeta::Integrated {
                s2p,
                s2p_nat,
                p2t,
                interface,
                length,
            } => {
                let kind = if *s2p_nat {
                    DecoderKind::NonAutoregressive
                } else {
                    DecoderKind::Autoregressive
                };
                let h = self
                    .piv
                    .as_ref()
                    .map(|v| v.hash().to_string())
                    .unwrap_or_default();
                IntegratedArch::new(
                    s2p.transformer(kind)?,
                    p2t.transformer(DecoderKind::Autoregressive)?,
                    interface.parse()?,
                    length.parse()?,
                    &h,
                    &h,
                )
            }
            _ => Err(Error::Config(format!(
                "{} holds a single model; an integrated model is needed",
                self.dir.display()
            ))),
        }
    }

    /// Intermediate checkpoints `snapshot-<update>`, by update.
    pub fn snapshots(&self) -> Result<Vec<(usize, String)>> {
        let dir = self.dir.join("checkpoints");
        let mut out = Vec::new();
        for entry in std::fs::read_dir(&dir).map_err(|e| Error::io(&dir, e))? {
            let entry = entry.map_err(|e| Error::io(&dir, e))?;
            let name = entry.file_name().to_string_lossy().to_string();
            if let Some(u) = name
                .strip_prefix("snapshot-")
                .and_then(|s| s.strip_suffix(".ckpt"))
                .and_then(|s| s.parse().ok())
            {
                out.push((u, format!("snapshot-{u}")));
            }
        }
        out.sort();
        Ok(out)
    }
}
