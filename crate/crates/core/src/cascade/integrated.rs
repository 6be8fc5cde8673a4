use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Graph, Scalar, Tensor, Var};
use crate::data::MASK;
use crate::error::{Error, Result};
use crate::nnet::{
    init_tensor, Bound, DecoderKind, DecoderOutput, EncoderOutput, ParamStore, ParamView,
    TokenBatch, Transformer,
};

/// How the first-stage decoder feeds the second-stage model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InterfaceKind {
    /// Final s2p decoder states go straight into the p2t encoder layers, or,
    /// without a p2t encoder, straight into the p2t cross-attention.
    DecoderStates { with_p2t_encoder: bool },
    /// Expected p2t embedding under the s2p output distribution.
    DecoderPosteriors,
}

impl InterfaceKind {
    pub fn name(self) -> &'static str {
        match self {
            InterfaceKind::DecoderStates {
                with_p2t_encoder: true,
            } => "states",
            InterfaceKind::DecoderStates {
                with_p2t_encoder: false,
            } => "states-no-encoder",
            InterfaceKind::DecoderPosteriors => "posteriors",
        }
    }
}

impl fmt::Display for InterfaceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for InterfaceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "states" | "decoder-states" => Ok(InterfaceKind::DecoderStates {
                with_p2t_encoder: true,
            }),
            "states-no-encoder" => Ok(InterfaceKind::DecoderStates {
                with_p2t_encoder: false,
            }),
            "posteriors" | "decoder-posteriors" => Ok(InterfaceKind::DecoderPosteriors),
            _ => Err(Error::Config(format!(
                "unknown interface '{s}' (expected states, states-no-encoder or posteriors)"
            ))),
        }
    }
}

/// Where the pivot length `K` (BOS and EOS included) comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LengthPolicy {
    /// Uniform in `[lo, hi)`.
    Random { lo: usize, hi: usize },
    /// Length of the encoded source.
    Source,
    /// Length of the encoded reference target.
    TargetOracle,
    /// Argmax of the s2p length head.
    Predicted,
}

impl LengthPolicy {
    pub const RANDOM: LengthPolicy = LengthPolicy::Random { lo: 2, hi: 100 };

    pub fn name(self) -> &'static str {
        match self {
            LengthPolicy::Random { .. } => "random",
            LengthPolicy::Source => "source",
            LengthPolicy::TargetOracle => "target-oracle",
            LengthPolicy::Predicted => "predicted",
        }
    }
}

impl fmt::Display for LengthPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LengthPolicy::Random { lo, hi } if (*lo, *hi) != (2, 100) => {
                write!(f, "random:{lo}:{hi}")
            }
            _ => f.write_str(self.name()),
        }
    }
}

impl FromStr for LengthPolicy {
    type Err = Error;

    /// `random`, `random:LO:HI`, `source`, `target-oracle`, `predicted`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("unknown length policy '{s}'"));
        match s {
            "random" => Ok(LengthPolicy::RANDOM),
            "source" => Ok(LengthPolicy::Source),
            "target-oracle" | "target_oracle" => Ok(LengthPolicy::TargetOracle),
            "predicted" => Ok(LengthPolicy::Predicted),
            _ => {
                let rest = s.strip_prefix("random:").ok_or_else(bad)?;
                let (lo, hi) = rest.split_once(':').ok_or_else(bad)?;
                let lo = lo.parse().map_err(|_| bad())?;
                let hi = hi.parse().map_err(|_| bad())?;
                if lo < 1 || hi <= lo {
                    return Err(Error::Config(format!(
                        "length policy '{s}' needs 1 <= lo < hi"
                    )));
                }
                Ok(LengthPolicy::Random { lo, hi })
            }
        }
    }
}

/// Which parameter groups are copied from pre-trained checkpoints.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct InitScheme {
    pub s2p_encoder: bool,
    pub s2p_decoder: bool,
    pub p2t_encoder: bool,
    pub p2t_decoder: bool,
}

impl InitScheme {
    pub const NONE: InitScheme = InitScheme {
        s2p_encoder: false,
        s2p_decoder: false,
        p2t_encoder: false,
        p2t_decoder: false,
    };
    pub const ALL: InitScheme = InitScheme {
        s2p_encoder: true,
        s2p_decoder: true,
        p2t_encoder: true,
        p2t_decoder: true,
    };
    pub const S2P: InitScheme = InitScheme {
        s2p_encoder: true,
        s2p_decoder: true,
        p2t_encoder: false,
        p2t_decoder: false,
    };
    pub const P2T: InitScheme = InitScheme {
        s2p_encoder: false,
        s2p_decoder: false,
        p2t_encoder: true,
        p2t_decoder: true,
    };

    pub fn uses_s2p(self) -> bool {
        self.s2p_encoder || self.s2p_decoder
    }

    pub fn uses_p2t(self) -> bool {
        self.p2t_encoder || self.p2t_decoder
    }

    /// Whether the (prefixed) parameter `name` is taken from a checkpoint.
    pub fn covers(self, name: &str) -> bool {
        match group_of(name) {
            Some(("s2p", "encoder")) => self.s2p_encoder,
            Some(("s2p", "decoder")) => self.s2p_decoder,
            Some(("p2t", "encoder")) => self.p2t_encoder,
            Some(("p2t", "decoder")) => self.p2t_decoder,
            _ => false,
        }
    }

    pub fn label(self) -> String {
        match self {
            InitScheme::NONE => "none".into(),
            InitScheme::ALL => "both".into(),
            InitScheme::S2P => "s2p".into(),
            InitScheme::P2T => "p2t".into(),
            _ => {
                let parts: Vec<&str> = [
                    (self.s2p_encoder, "s2p.encoder"),
                    (self.s2p_decoder, "s2p.decoder"),
                    (self.p2t_encoder, "p2t.encoder"),
                    (self.p2t_decoder, "p2t.decoder"),
                ]
                .iter()
                .filter(|(on, _)| *on)
                .map(|(_, n)| *n)
                .collect();
                parts.join(",")
            }
        }
    }
}

impl fmt::Display for InitScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

impl FromStr for InitScheme {
    type Err = Error;

    /// Comma-separated list of `s2p`, `p2t`, `s2p.encoder`, ... or one of
    /// `none`, `both`, `all`.
    fn from_str(s: &str) -> Result<Self> {
        let mut out = InitScheme::NONE;
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            match part {
                "none" => {}
                "both" | "all" => out = InitScheme::ALL,
                "s2p" => (out.s2p_encoder, out.s2p_decoder) = (true, true),
                "p2t" => (out.p2t_encoder, out.p2t_decoder) = (true, true),
                "s2p.encoder" => out.s2p_encoder = true,
                "s2p.decoder" => out.s2p_decoder = true,
                "p2t.encoder" => out.p2t_encoder = true,
                "p2t.decoder" => out.p2t_decoder = true,
                _ => return Err(Error::Config(format!("unknown init group '{part}'"))),
            }
        }
        Ok(out)
    }
}

/// `("s2p", "encoder")` for `s2p.encoder.layers.0...`.
pub fn group_of(name: &str) -> Option<(&str, &str)> {
    let mut it = name.splitn(3, '.');
    match (it.next(), it.next()) {
        (Some(side), Some(group)) => Some((side, group)),
        _ => None,
    }
}

/// Architecture of an integrated model, validated.
#[derive(Debug, Clone, PartialEq)]
pub struct IntegratedArch {
    pub s2p: Transformer,
    pub p2t: Transformer,
    pub interface: InterfaceKind,
    pub length: LengthPolicy,
    /// Hash of the s2p target (pivot) vocabulary.
    pub pivot_vocab: String,
}

impl IntegratedArch {
    /// `s2p_pivot` / `p2t_pivot` are the hashes of the pivot vocabulary on
    /// each side; the posteriors interface requires them to agree.
    pub fn new(
        s2p: Transformer,
        p2t: Transformer,
        interface: InterfaceKind,
        length: LengthPolicy,
        s2p_pivot: &str,
        p2t_pivot: &str,
    ) -> Result<Self> {
        if interface == InterfaceKind::DecoderPosteriors && s2p_pivot != p2t_pivot {
            return Err(Error::VocabMismatch {
                left: s2p_pivot.to_string(),
                right: p2t_pivot.to_string(),
            });
        }
        if p2t.kind != DecoderKind::Autoregressive {
            return Err(Error::Config("the p2t model must be autoregressive".into()));
        }
        match interface {
            InterfaceKind::DecoderStates { .. } if s2p.cfg.d_model != p2t.cfg.d_model => {
                return Err(Error::Config(format!(
                    "decoder-states interface needs equal d_model, got s2p {} and p2t {}",
                    s2p.cfg.d_model, p2t.cfg.d_model
                )));
            }
            InterfaceKind::DecoderPosteriors
                if s2p.cfg.vocab_size_tgt != p2t.cfg.vocab_size_src =>
            {
                return Err(Error::Config(format!(
                    "decoder-posteriors interface needs equal pivot vocabulary sizes, got {} and {}",
                    s2p.cfg.vocab_size_tgt, p2t.cfg.vocab_size_src
                )));
            }
            _ => {}
        }
        if let LengthPolicy::Random { hi, .. } = length {
            let limit = s2p.cfg.max_positions.min(p2t.cfg.max_positions);
            if hi - 1 > limit {
                return Err(Error::Config(format!(
                    "random pivot lengths up to {} exceed max_positions {limit}",
                    hi - 1
                )));
            }
        }
        if length == LengthPolicy::Predicted && s2p.kind != DecoderKind::NonAutoregressive {
            return Err(Error::Config(
                "predicted pivot length needs a non-autoregressive s2p model".into(),
            ));
        }
        Ok(IntegratedArch {
            s2p,
            p2t,
            interface,
            length,
            pivot_vocab: s2p_pivot.to_string(),
        })
    }

    fn has_p2t_encoder(&self) -> bool {
        self.interface
            != InterfaceKind::DecoderStates {
                with_p2t_encoder: false,
            }
    }

    pub fn param_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let mut out: Vec<_> = self
            .s2p
            .param_shapes()
            .into_iter()
            .map(|(n, s)| (format!("s2p.{n}"), s))
            .collect();
        let keep_enc = self.has_p2t_encoder();
        out.extend(
            self.p2t
                .param_shapes()
                .into_iter()
                .filter(|(n, _)| keep_enc || !n.starts_with("encoder."))
                .map(|(n, s)| (format!("p2t.{n}"), s)),
        );
        out
    }

    pub fn init_params<T: Scalar>(&self, seed: u64) -> ParamStore<T> {
        let mut store = ParamStore::new();
        for (name, shape) in self.param_shapes() {
            let d = if name.starts_with("s2p.") {
                self.s2p.cfg.d_model
            } else {
                self.p2t.cfg.d_model
            };
            let t = init_tensor(&name, &shape, d, seed);
            store.insert(name, t);
        }
        store
    }

    pub fn check_params<T: Scalar>(&self, store: &ParamStore<T>) -> Result<()> {
        self.s2p.check_params(&store.strip_prefix("s2p."))?;
        let p2t = store.strip_prefix("p2t.");
        if self.has_p2t_encoder() {
            return self.p2t.check_params(&p2t);
        }
        if let Some(n) = p2t.names().find(|n| n.starts_with("encoder.")) {
            return Err(Error::Data(format!("unexpected parameter 'p2t.{n}'")));
        }
        let mut full = p2t.clone();
        for (name, shape) in self.p2t.param_shapes() {
            if name.starts_with("encoder.") {
                full.insert(name, Tensor::zeros(&shape));
            }
        }
        self.p2t.check_params(&full)
    }

    /// Parameters that end-to-end training leaves without gradient by
    /// construction.
    pub fn detached_params(&self) -> Vec<String> {
        self.param_shapes()
            .into_iter()
            .map(|(n, _)| n)
            .filter(|n| {
                n.starts_with("s2p.decoder.length.")
                    || (matches!(self.interface, InterfaceKind::DecoderStates { .. })
                        && (n.starts_with("s2p.decoder.out.") || n == "p2t.encoder.embed"))
            })
            .collect()
    }
}

/// Inputs of one integrated forward pass.
#[derive(Debug, Clone, Copy)]
pub struct IntegratedInput<'a> {
    pub src: &'a TokenBatch,
    /// For an autoregressive s2p model, the pivot sequences `[BOS .. EOS]`
    /// it is teacher-forced on (required). For a non-autoregressive one, an
    /// explicit, possibly partly masked, decoder input that overrides the
    /// length policy.
    pub pivot: Option<&'a [Vec<usize>]>,
    /// Encoded reference target lengths, for the target-oracle policy.
    pub ref_lengths: Option<&'a [usize]>,
    /// Seed of the random length policy.
    pub length_seed: u64,
    /// Replace posteriors by one-hot argmax vectors.
    pub hard: bool,
}

impl<'a> IntegratedInput<'a> {
    pub fn new(src: &'a TokenBatch) -> Self {
        IntegratedInput {
            src,
            pivot: None,
            ref_lengths: None,
            length_seed: 0,
            hard: false,
        }
    }
}

/// First stage and bridge of an integrated forward pass.
#[derive(Debug, Clone)]
pub struct IntegratedEncoding {
    /// s2p decoder output over the pivot positions.
    pub pivot: DecoderOutput,
    pub pivot_mask: Vec<bool>,
    pub pivot_lengths: Vec<usize>,
    /// What the p2t decoder attends to.
    pub bridged: EncoderOutput,
}

/// A src→piv model and a piv→trg model joined into one differentiable
/// network. Parameter names carry `s2p.` / `p2t.` prefixes.
#[derive(Debug, Clone, PartialEq)]
pub struct IntegratedModel<T> {
    pub arch: IntegratedArch,
    pub params: ParamStore<T>,
}

impl<T: Scalar> IntegratedModel<T> {
    pub fn new(arch: IntegratedArch, params: ParamStore<T>) -> Result<Self> {
        arch.check_params(&params)?;
        Ok(IntegratedModel { arch, params })
    }

    /// Runs the s2p model and the bridge.
    pub fn encode(
        &self,
        g: &mut Graph<T>,
        b: &Bound,
        input: &IntegratedInput,
    ) -> Result<IntegratedEncoding> {
        let s2p = b.view("s2p.");
        let enc = self.arch.s2p.encode(g, &s2p, input.src)?;
        let (dec_in, lengths) = match self.arch.s2p.kind {
            DecoderKind::NonAutoregressive => {
                let rows: Vec<Vec<usize>> = match input.pivot {
                    Some(piv) => {
                        if piv.len() != input.src.batch || piv.iter().any(Vec::is_empty) {
                            return Err(Error::InvalidArgument(
                                "one non-empty pivot input per source expected".into(),
                            ));
                        }
                        piv.to_vec()
                    }
                    None => {
                        let ks = resolve_lengths(
                            self.arch.length,
                            &self.arch.s2p,
                            g,
                            &s2p,
                            &enc,
                            &input.src.lengths(),
                            input.ref_lengths,
                            input.length_seed,
                        )?;
                        ks.iter().map(|&k| vec![MASK; k]).collect()
                    }
                };
                let ks = rows.iter().map(Vec::len).collect();
                (TokenBatch::from_seqs(&rows), ks)
            }
            DecoderKind::Autoregressive => {
                let piv = input.pivot.ok_or_else(|| {
                    Error::InvalidArgument(
                        "an autoregressive s2p model needs pivot sequences".into(),
                    )
                })?;
                if piv.len() != input.src.batch || piv.iter().any(|p| p.len() < 2) {
                    return Err(Error::InvalidArgument(
                        "pivot sequences must be [BOS .. EOS], one per source".into(),
                    ));
                }
                let rows: Vec<Vec<usize>> = piv.iter().map(|p| p[..p.len() - 1].to_vec()).collect();
                let ks = rows.iter().map(Vec::len).collect();
                (TokenBatch::from_seqs(&rows), ks)
            }
        };
        let pivot = self.arch.s2p.decode(g, &s2p, &enc, &dec_in)?;
        let bridged = match self.arch.interface {
            InterfaceKind::DecoderStates { .. } => {
                self.bridge_states(g, b, pivot.states, &dec_in.mask)?
            }
            InterfaceKind::DecoderPosteriors => {
                let post = if input.hard {
                    let onehot = hard_posteriors(g.value(pivot.logits));
                    g.constant(onehot)
                } else {
                    pivot.posteriors(g)?
                };
                self.bridge_posteriors(g, b, post, &dec_in.mask)?
            }
        };
        Ok(IntegratedEncoding {
            pivot,
            pivot_mask: dec_in.mask,
            pivot_lengths: lengths,
            bridged,
        })
    }

    /// s2p decoder states `[B, K, D]` into the p2t encoder layers (no
    /// embedding, no positions), or unchanged when there is no p2t encoder.
    pub fn bridge_states(
        &self,
        g: &mut Graph<T>,
        b: &Bound,
        states: Var,
        mask: &[bool],
    ) -> Result<EncoderOutput> {
        let s = g.shape(states).to_vec();
        if s.len() != 3 || s[2] != self.arch.p2t.cfg.d_model {
            return Err(Error::ShapeMismatch {
                op: "bridge_states",
                lhs: s,
                rhs: vec![self.arch.p2t.cfg.d_model],
            });
        }
        let states = match self.arch.interface {
            InterfaceKind::DecoderStates {
                with_p2t_encoder: false,
            } => states,
            _ => self
                .arch
                .p2t
                .encoder_layers(g, &b.view("p2t."), states, mask)?,
        };
        Ok(EncoderOutput {
            states,
            mask: mask.to_vec(),
            batch: s[0],
            len: s[1],
        })
    }

    /// `posteriors @ E` with `E` the p2t source embedding table.
    pub fn soft_embedding(&self, g: &mut Graph<T>, b: &Bound, posteriors: Var) -> Result<Var> {
        let table = b.get("p2t.encoder.embed")?;
        g.matmul(posteriors, table)
    }

    /// Soft embedding, then the usual scaling, positions and p2t encoder.
    pub fn bridge_posteriors(
        &self,
        g: &mut Graph<T>,
        b: &Bound,
        posteriors: Var,
        mask: &[bool],
    ) -> Result<EncoderOutput> {
        if self.arch.interface != InterfaceKind::DecoderPosteriors {
            return Err(Error::InvalidArgument(
                "model does not use the decoder-posteriors interface".into(),
            ));
        }
        let soft = self.soft_embedding(g, b, posteriors)?;
        self.arch
            .p2t
            .encode_embedded(g, &b.view("p2t."), soft, mask)
    }

    /// Integrated forward pass, teacher-forced on `trg_prefix`.
    pub fn forward(
        &self,
        g: &mut Graph<T>,
        b: &Bound,
        input: &IntegratedInput,
        trg_prefix: &TokenBatch,
    ) -> Result<(IntegratedEncoding, DecoderOutput)> {
        let enc = self.encode(g, b, input)?;
        let out = self
            .arch
            .p2t
            .decode(g, &b.view("p2t."), &enc.bridged, trg_prefix)?;
        Ok((enc, out))
    }
}

/// Pivot length `K` per sentence under `policy`; `nat` must be the
/// non-autoregressive s2p model that produced `enc` when the policy is
/// [`LengthPolicy::Predicted`].
#[allow(clippy::too_many_arguments)]
pub fn resolve_lengths<T: Scalar>(
    policy: LengthPolicy,
    nat: &Transformer,
    g: &mut Graph<T>,
    p: &ParamView,
    enc: &EncoderOutput,
    src_lengths: &[usize],
    ref_lengths: Option<&[usize]>,
    seed: u64,
) -> Result<Vec<usize>> {
    let n = src_lengths.len();
    let ks = match policy {
        LengthPolicy::Random { lo, hi } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..n).map(|_| rng.gen_range(lo..hi)).collect()
        }
        LengthPolicy::Source => src_lengths.to_vec(),
        LengthPolicy::TargetOracle => {
            let refs = ref_lengths.ok_or_else(|| {
                Error::InvalidArgument(
                    "target-oracle length policy needs reference target lengths".into(),
                )
            })?;
            if refs.len() != n {
                return Err(Error::InvalidArgument(format!(
                    "{} reference lengths for {n} sentences",
                    refs.len()
                )));
            }
            refs.to_vec()
        }
        LengthPolicy::Predicted => {
            let logits = nat.predict_length(g, p, enc)?;
            let t = g.value(logits);
            (0..n)
                .map(|r| {
                    let row = t.row(r);
                    (0..row.len()).fold(0, |m, i| if row[i] > row[m] { i } else { m }) + 1
                })
                .collect()
        }
    };
    Ok(ks
        .into_iter()
        .map(|k: usize| k.clamp(1, nat.cfg.max_positions))
        .collect())
}

/// One-hot of the argmax of every row of `logits`.
pub fn hard_posteriors<T: Scalar>(logits: &Tensor<T>) -> Tensor<T> {
    let v = *logits.shape().last().unwrap();
    let mut out = Tensor::zeros(logits.shape());
    for (r, row) in logits.data().chunks(v).enumerate() {
        let best = (0..v).fold(0, |m, i| if row[i] > row[m] { i } else { m });
        out.data_mut()[r * v + best] = T::one();
    }
    out
}

/// Builds an integrated model: groups selected by `scheme` are copied from
/// the checkpoints, everything else is freshly initialised from `seed`.
pub fn concatenate<T: Scalar>(
    arch: IntegratedArch,
    s2p_ckpt: Option<&ParamStore<T>>,
    p2t_ckpt: Option<&ParamStore<T>>,
    scheme: InitScheme,
    seed: u64,
) -> Result<IntegratedModel<T>> {
    let need = |ckpt: Option<&ParamStore<T>>, side: &str| -> Result<Option<ParamStore<T>>> {
        match ckpt {
            Some(c) => {
                let m = if side == "s2p" { &arch.s2p } else { &arch.p2t };
                m.check_params(c)?;
                Ok(Some(c.prefixed(&format!("{side}."))))
            }
            None => Err(Error::Config(format!(
                "init scheme '{scheme}' needs a {side} checkpoint"
            ))),
        }
    };
    let s2p = if scheme.uses_s2p() {
        need(s2p_ckpt, "s2p")?
    } else {
        None
    };
    let p2t = if scheme.uses_p2t() {
        need(p2t_ckpt, "p2t")?
    } else {
        None
    };
    let mut params = arch.init_params(seed);
    let names: Vec<String> = params.names().map(str::to_string).collect();
    for name in names {
        if !scheme.covers(&name) {
            continue;
        }
        let src = if name.starts_with("s2p.") { &s2p } else { &p2t };
        if let Some(store) = src {
            *params.get_mut(&name)? = store.get(&name)?.clone();
        }
    }
    IntegratedModel::new(arch, params)
}
