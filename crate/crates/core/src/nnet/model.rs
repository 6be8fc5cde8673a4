use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::TransformerConfig;
use super::params::{ParamStore, ParamView};
use crate::autodiff::{Graph, Scalar, Tensor, Var};
use crate::data::{BOS, PAD};
use crate::error::{Error, Result};

const LN_EPS: f64 = 1e-5;

/// Padded id matrix `[batch, len]` with its padding mask.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenBatch {
    pub ids: Vec<usize>,
    /// `true` for real tokens.
    pub mask: Vec<bool>,
    pub batch: usize,
    pub len: usize,
}

impl TokenBatch {
    pub fn from_seqs<S: AsRef<[usize]>>(seqs: &[S]) -> Self {
        let batch = seqs.len();
        let len = seqs
            .iter()
            .map(|s| s.as_ref().len())
            .max()
            .unwrap_or(0)
            .max(1);
        let mut ids = vec![PAD; batch * len];
        let mut mask = vec![false; batch * len];
        for (b, s) in seqs.iter().enumerate() {
            for (i, &t) in s.as_ref().iter().enumerate() {
                ids[b * len + i] = t;
                mask[b * len + i] = true;
            }
        }
        TokenBatch {
            ids,
            mask,
            batch,
            len,
        }
    }

    pub fn lengths(&self) -> Vec<usize> {
        self.mask
            .chunks(self.len)
            .map(|m| m.iter().filter(|&&x| x).count())
            .collect()
    }

    pub fn row(&self, b: usize) -> &[usize] {
        &self.ids[b * self.len..(b + 1) * self.len]
    }
}

/// Encoder states `[batch, len, d_model]` and the key padding mask used by
/// every attention that reads them.
#[derive(Debug, Clone)]
pub struct EncoderOutput {
    pub states: Var,
    pub mask: Vec<bool>,
    pub batch: usize,
    pub len: usize,
}

/// Final decoder states and output-layer logits.
#[derive(Debug, Clone, Copy)]
pub struct DecoderOutput {
    pub states: Var,
    pub logits: Var,
}

impl DecoderOutput {
    /// Softmax over the target vocabulary.
    pub fn posteriors<T: Scalar>(&self, g: &mut Graph<T>) -> Result<Var> {
        g.softmax(self.logits)
    }
}

/// Which decoder a model carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecoderKind {
    /// Causal decoder, one token at a time.
    Autoregressive,
    /// Bidirectional decoder over a fixed-length (partly masked) input, with
    /// a length-prediction head on the encoder.
    NonAutoregressive,
}

/// Sinusoidal position table `[len, d_model]`.
pub fn positional_encoding<T: Scalar>(len: usize, d_model: usize) -> Tensor<T> {
    Tensor::from_fn(&[len, d_model], |i| {
        let (pos, dim) = (i / d_model, i % d_model);
        let rate = 10000f64.powf((2 * (dim / 2)) as f64 / d_model as f64);
        let angle = pos as f64 / rate;
        T::lit(if dim % 2 == 0 {
            angle.sin()
        } else {
            angle.cos()
        })
    })
}

fn stable_hash(s: &str) -> u64 {
    // FNV-1a
    s.bytes().fold(0xcbf29ce484222325u64, |h, b| {
        (h ^ b as u64).wrapping_mul(0x100000001b3)
    })
}

/// Initial value of the parameter `name`: gains 1, biases 0, embeddings
/// uniform in `±sqrt(3/d_model)`, matrices Xavier-uniform. The draw depends
/// only on `(seed, name)`.
pub fn init_tensor<T: Scalar>(name: &str, shape: &[usize], d_model: usize, seed: u64) -> Tensor<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ stable_hash(name));
    if name.ends_with(".gain") {
        Tensor::full(shape, T::one())
    } else if name.ends_with(".bias") {
        Tensor::zeros(shape)
    } else if name.ends_with(".embed") {
        let a = (3.0 / d_model as f64).sqrt();
        Tensor::from_fn(shape, |_| T::lit(rng.gen_range(-a..a)))
    } else {
        let a = (6.0 / (shape[0] + shape[1]) as f64).sqrt();
        Tensor::from_fn(shape, |_| T::lit(rng.gen_range(-a..a)))
    }
}

/// Encoder-decoder Transformer (post-norm).
#[derive(Debug, Clone, PartialEq)]
pub struct Transformer {
    pub cfg: TransformerConfig,
    pub kind: DecoderKind,
}

struct Linear {
    weight: Var,
    bias: Var,
}

impl Linear {
    fn load(p: &ParamView) -> Result<Self> {
        Ok(Linear {
            weight: p.get("weight")?,
            bias: p.get("bias")?,
        })
    }

    fn apply<T: Scalar>(&self, g: &mut Graph<T>, x: Var) -> Result<Var> {
        let y = g.matmul(x, self.weight)?;
        g.add(y, self.bias)
    }
}

impl Transformer {
    pub fn new(cfg: TransformerConfig, kind: DecoderKind) -> Result<Self> {
        cfg.validate()?;
        Ok(Transformer { cfg, kind })
    }

    /// Expected name and shape of every parameter.
    pub fn param_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let c = &self.cfg;
        let (d, f) = (c.d_model, c.d_ff);
        let mut out = vec![("encoder.embed".to_string(), vec![c.vocab_size_src, d])];
        let attn = |out: &mut Vec<(String, Vec<usize>)>, p: &str| {
            for m in ["q", "k", "v", "o"] {
                out.push((format!("{p}.{m}.weight"), vec![d, d]));
                out.push((format!("{p}.{m}.bias"), vec![d]));
            }
        };
        let norm = |out: &mut Vec<(String, Vec<usize>)>, p: &str| {
            out.push((format!("{p}.gain"), vec![d]));
            out.push((format!("{p}.bias"), vec![d]));
        };
        let ffn = |out: &mut Vec<(String, Vec<usize>)>, p: &str| {
            out.push((format!("{p}.fc1.weight"), vec![d, f]));
            out.push((format!("{p}.fc1.bias"), vec![f]));
            out.push((format!("{p}.fc2.weight"), vec![f, d]));
            out.push((format!("{p}.fc2.bias"), vec![d]));
        };
        for l in 0..c.n_enc_layers {
            let p = format!("encoder.layers.{l}");
            attn(&mut out, &format!("{p}.self_attn"));
            norm(&mut out, &format!("{p}.ln1"));
            ffn(&mut out, &format!("{p}.ffn"));
            norm(&mut out, &format!("{p}.ln2"));
        }
        out.push(("decoder.embed".to_string(), vec![c.vocab_size_tgt, d]));
        for l in 0..c.n_dec_layers {
            let p = format!("decoder.layers.{l}");
            attn(&mut out, &format!("{p}.self_attn"));
            norm(&mut out, &format!("{p}.ln1"));
            attn(&mut out, &format!("{p}.cross_attn"));
            norm(&mut out, &format!("{p}.ln2"));
            ffn(&mut out, &format!("{p}.ffn"));
            norm(&mut out, &format!("{p}.ln3"));
        }
        out.push(("decoder.out.weight".to_string(), vec![d, c.vocab_size_tgt]));
        out.push(("decoder.out.bias".to_string(), vec![c.vocab_size_tgt]));
        if self.kind == DecoderKind::NonAutoregressive {
            out.push((
                "decoder.length.weight".to_string(),
                vec![d, c.max_positions],
            ));
            out.push(("decoder.length.bias".to_string(), vec![c.max_positions]));
        }
        out
    }

    /// Fresh parameters. Every tensor draws from its own stream seeded by
    /// `(seed, name)`, so a tensor's initial value does not depend on which
    /// other tensors exist.
    pub fn init_params<T: Scalar>(&self, seed: u64) -> ParamStore<T> {
        let mut store = ParamStore::new();
        for (name, shape) in self.param_shapes() {
            let t = init_tensor(&name, &shape, self.cfg.d_model, seed);
            store.insert(name, t);
        }
        store
    }

    /// Checks that `store` has exactly the expected names and shapes.
    pub fn check_params<T: Scalar>(&self, store: &ParamStore<T>) -> Result<()> {
        let expected = self.param_shapes();
        for (name, shape) in &expected {
            let t = store.get(name)?;
            if t.shape() != shape.as_slice() {
                return Err(Error::ParamShape {
                    name: name.clone(),
                    found: t.shape().to_vec(),
                    expected: shape.clone(),
                });
            }
        }
        if store.len() != expected.len() {
            let known: std::collections::HashSet<&str> =
                expected.iter().map(|(n, _)| n.as_str()).collect();
            if let Some(extra) = store.names().find(|n| !known.contains(n)) {
                return Err(Error::Data(format!("unexpected parameter '{extra}'")));
            }
        }
        Ok(())
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len > self.cfg.max_positions {
            return Err(Error::InvalidArgument(format!(
                "sequence length {len} exceeds model.max_positions {}",
                self.cfg.max_positions
            )));
        }
        Ok(())
    }

    fn norm<T: Scalar>(&self, g: &mut Graph<T>, p: &ParamView, x: Var) -> Result<Var> {
        let y = g.layer_norm(x, LN_EPS)?;
        let y = g.mul(y, p.get("gain")?)?;
        g.add(y, p.get("bias")?)
    }

    #[allow(clippy::too_many_arguments)]
    fn attention<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        p: &ParamView,
        query: Var,
        memory: Var,
        key_mask: &[bool],
        causal: bool,
    ) -> Result<Var> {
        let (h, dh, d) = (self.cfg.n_heads, self.cfg.head_dim(), self.cfg.d_model);
        let (b, lq) = (g.shape(query)[0], g.shape(query)[1]);
        let lk = g.shape(memory)[1];
        let split = |g: &mut Graph<T>, name: &str, x: Var, l: usize| -> Result<Var> {
            let y = Linear::load(&p.sub(name))?.apply(g, x)?;
            let y = g.reshape(y, &[b, l, h, dh])?;
            g.permute(y, &[0, 2, 1, 3])
        };
        let q = split(g, "q", query, lq)?;
        let k = split(g, "k", memory, lk)?;
        let v = split(g, "v", memory, lk)?;
        let att = g.attention(q, k, v, Some(key_mask), causal)?;
        let att = g.permute(att, &[0, 2, 1, 3])?;
        let att = g.reshape(att, &[b, lq, d])?;
        Linear::load(&p.sub("o"))?.apply(g, att)
    }

    fn feed_forward<T: Scalar>(&self, g: &mut Graph<T>, p: &ParamView, x: Var) -> Result<Var> {
        let h = Linear::load(&p.sub("fc1"))?.apply(g, x)?;
        let h = g.relu(h);
        Linear::load(&p.sub("fc2"))?.apply(g, h)
    }

    /// `LN(x + dropout(sublayer))`
    fn residual<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        p: &ParamView,
        x: Var,
        sub: Var,
    ) -> Result<Var> {
        let sub = g.dropout(sub, self.cfg.dropout)?;
        let y = g.add(x, sub)?;
        self.norm(g, p, y)
    }

    /// `x * sqrt(d_model) + positions`, then dropout.
    fn embed_input<T: Scalar>(&self, g: &mut Graph<T>, embedded: Var) -> Result<Var> {
        let len = g.shape(embedded)[1];
        self.check_len(len)?;
        let x = g.scale(embedded, T::lit((self.cfg.d_model as f64).sqrt()));
        let pe = g.constant(positional_encoding(len, self.cfg.d_model));
        let x = g.add(x, pe)?;
        g.dropout(x, self.cfg.dropout)
    }

    /// Runs the encoder stack on already-formed input vectors `[B, L, D]`.
    pub fn encoder_layers<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        p: &ParamView,
        x: Var,
        mask: &[bool],
    ) -> Result<Var> {
        let mut x = x;
        for l in 0..self.cfg.n_enc_layers {
            let lp = p.sub(&format!("encoder.layers.{l}"));
            let a = self.attention(g, &lp.sub("self_attn"), x, x, mask, false)?;
            x = self.residual(g, &lp.sub("ln1"), x, a)?;
            let f = self.feed_forward(g, &lp.sub("ffn"), x)?;
            x = self.residual(g, &lp.sub("ln2"), x, f)?;
        }
        Ok(x)
    }

    /// Encodes from input vectors that still need scaling and positions;
    /// `embedded` is `[B, L, D]` (a lookup or a soft embedding).
    pub fn encode_embedded<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        p: &ParamView,
        embedded: Var,
        mask: &[bool],
    ) -> Result<EncoderOutput> {
        let s = g.shape(embedded).to_vec();
        let x = self.embed_input(g, embedded)?;
        let states = self.encoder_layers(g, p, x, mask)?;
        Ok(EncoderOutput {
            states,
            mask: mask.to_vec(),
            batch: s[0],
            len: s[1],
        })
    }

    pub fn encode<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        p: &ParamView,
        src: &TokenBatch,
    ) -> Result<EncoderOutput> {
        self.check_len(src.len)?;
        let emb = g.embedding(p.get("encoder.embed")?, &src.ids, &[src.batch, src.len])?;
        self.encode_embedded(g, p, emb, &src.mask)
    }

    /// Decoder over `dec_in`, causal for autoregressive models and
    /// bidirectional otherwise.
    pub fn decode<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        p: &ParamView,
        enc: &EncoderOutput,
        dec_in: &TokenBatch,
    ) -> Result<DecoderOutput> {
        if self.kind == DecoderKind::Autoregressive {
            for b in 0..dec_in.batch {
                if !dec_in.mask[b * dec_in.len] {
                    return Err(Error::InvalidArgument(format!(
                        "decoder prefix {b} is empty"
                    )));
                }
                if dec_in.row(b)[0] != BOS {
                    return Err(Error::InvalidArgument(format!(
                        "decoder prefix {b} does not start with BOS"
                    )));
                }
            }
        }
        self.check_len(dec_in.len)?;
        if dec_in.batch != enc.batch {
            return Err(Error::ShapeMismatch {
                op: "decode",
                lhs: vec![enc.batch, enc.len],
                rhs: vec![dec_in.batch, dec_in.len],
            });
        }
        let emb = g.embedding(
            p.get("decoder.embed")?,
            &dec_in.ids,
            &[dec_in.batch, dec_in.len],
        )?;
        let x = self.embed_input(g, emb)?;
        self.decoder_layers(g, p, enc, x, &dec_in.mask)
    }

    pub fn decoder_layers<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        p: &ParamView,
        enc: &EncoderOutput,
        x: Var,
        mask: &[bool],
    ) -> Result<DecoderOutput> {
        let causal = self.kind == DecoderKind::Autoregressive;
        let mut x = x;
        for l in 0..self.cfg.n_dec_layers {
            let lp = p.sub(&format!("decoder.layers.{l}"));
            let a = self.attention(g, &lp.sub("self_attn"), x, x, mask, causal)?;
            x = self.residual(g, &lp.sub("ln1"), x, a)?;
            let c = self.attention(g, &lp.sub("cross_attn"), x, enc.states, &enc.mask, false)?;
            x = self.residual(g, &lp.sub("ln2"), x, c)?;
            let f = self.feed_forward(g, &lp.sub("ffn"), x)?;
            x = self.residual(g, &lp.sub("ln3"), x, f)?;
        }
        let logits = Linear::load(&p.sub("decoder.out"))?.apply(g, x)?;
        Ok(DecoderOutput { states: x, logits })
    }

    /// Length logits `[B, max_positions]`; column `i` stands for length `i+1`.
    pub fn predict_length<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        p: &ParamView,
        enc: &EncoderOutput,
    ) -> Result<Var> {
        if self.kind != DecoderKind::NonAutoregressive {
            return Err(Error::InvalidArgument(
                "length prediction needs a non-autoregressive model".into(),
            ));
        }
        let pooled = g.masked_mean(enc.states, &enc.mask)?;
        Linear::load(&p.sub("decoder.length"))?.apply(g, pooled)
    }
}
