//! Encoder, prediction network and joint network wired into one transducer.

use crate::error::{MtlabError, Result};
use crate::labels::{Regime, TokenId, Vocabulary};
use crate::numerics::{
    Array2, Checkpoint, Embedding, Gradients, Gru, GruCache, ParamStore,
};
use crate::transducer::{JointCache, JointNetwork, LogitLattice};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EncoderMode {
    /// Forward and backward GRUs, outputs concatenated.
    Offline,
    /// Forward GRU only; frame `t` sees frames `..=t`.
    Causal,
}

impl fmt::Display for EncoderMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EncoderMode::Offline => "offline",
            EncoderMode::Causal => "causal",
        })
    }
}

impl FromStr for EncoderMode {
    type Err = MtlabError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "offline" => Ok(EncoderMode::Offline),
            "causal" => Ok(EncoderMode::Causal),
            other => Err(MtlabError::Parse(format!("unknown encoder mode `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Base vocabulary size K (blank included).
    pub base_vocab: usize,
    pub regime: Regime,
    pub feat_dim: usize,
    pub encoder_mode: EncoderMode,
    pub enc_layers: usize,
    /// Hidden size per direction.
    pub enc_hidden: usize,
    pub pred_embed: usize,
    pub pred_hidden: usize,
    pub joint_dim: usize,
    pub init_seed: u64,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("base_vocab", self.base_vocab),
            ("feat_dim", self.feat_dim),
            ("enc_layers", self.enc_layers),
            ("enc_hidden", self.enc_hidden),
            ("pred_embed", self.pred_embed),
            ("pred_hidden", self.pred_hidden),
            ("joint_dim", self.joint_dim),
        ];
        for (name, v) in dims {
            if v == 0 {
                return Err(MtlabError::Config(format!("{name} must be positive")));
            }
        }
        if self.base_vocab < 2 {
            return Err(MtlabError::Config("base_vocab must be at least 2".into()));
        }
        Ok(())
    }

    pub fn enc_dim(&self) -> usize {
        match self.encoder_mode {
            EncoderMode::Offline => 2 * self.enc_hidden,
            EncoderMode::Causal => self.enc_hidden,
        }
    }

    fn to_meta(&self, ck: &mut Checkpoint) {
        ck.set_meta("base_vocab", self.base_vocab);
        ck.set_meta("regime", self.regime);
        ck.set_meta("feat_dim", self.feat_dim);
        ck.set_meta("encoder_mode", self.encoder_mode);
        ck.set_meta("enc_layers", self.enc_layers);
        ck.set_meta("enc_hidden", self.enc_hidden);
        ck.set_meta("pred_embed", self.pred_embed);
        ck.set_meta("pred_hidden", self.pred_hidden);
        ck.set_meta("joint_dim", self.joint_dim);
        ck.set_meta("init_seed", self.init_seed);
    }

    fn from_meta(ck: &Checkpoint) -> Result<Self> {
        Ok(Self {
            base_vocab: ck.meta_parse("base_vocab")?,
            regime: ck.meta_parse("regime")?,
            feat_dim: ck.meta_parse("feat_dim")?,
            encoder_mode: ck.meta_parse("encoder_mode")?,
            enc_layers: ck.meta_parse("enc_layers")?,
            enc_hidden: ck.meta_parse("enc_hidden")?,
            pred_embed: ck.meta_parse("pred_embed")?,
            pred_hidden: ck.meta_parse("pred_hidden")?,
            joint_dim: ck.meta_parse("joint_dim")?,
            init_seed: ck.meta_parse("init_seed")?,
        })
    }
}

#[derive(Clone, Debug)]
struct EncoderLayer {
    fwd: Gru,
    bwd: Option<Gru>,
}

/// Saved activations of one encoder pass.
#[derive(Clone, Debug)]
pub struct EncoderCache {
    layers: Vec<(GruCache, Option<GruCache>)>,
}

/// Saved activations of one prediction-network pass.
#[derive(Clone, Debug)]
pub struct PredCache {
    context: Vec<TokenId>,
    gru: GruCache,
}

/// Saved activations for a lattice built from encoder states.
#[derive(Clone, Debug)]
pub struct LatticeCache {
    pred: PredCache,
    joint: JointCache,
}

#[derive(Debug)]
pub struct Model {
    pub config: ModelConfig,
    pub store: ParamStore,
    pub vocab: Vocabulary,
    encoder: Vec<EncoderLayer>,
    embed: Embedding,
    pred: Gru,
    pub joint: JointNetwork,
    encoder_calls: AtomicU64,
}

impl Clone for Model {
    fn clone(&self) -> Self {
        Self {
            config: self.config.clone(),
            store: self.store.clone(),
            vocab: self.vocab.clone(),
            encoder: self.encoder.clone(),
            embed: self.embed.clone(),
            pred: self.pred.clone(),
            joint: self.joint.clone(),
            encoder_calls: AtomicU64::new(self.encoder_calls()),
        }
    }
}

impl Model {
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let vocab = Vocabulary::synthetic(config.base_vocab, config.regime)?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.init_seed);
        let mut store = ParamStore::new();
        let mut encoder = Vec::with_capacity(config.enc_layers);
        let mut input = config.feat_dim;
        for l in 0..config.enc_layers {
            let fwd = Gru::new(&mut store, &format!("enc{l}.fwd"), input, config.enc_hidden, &mut rng);
            let bwd = (config.encoder_mode == EncoderMode::Offline).then(|| {
                Gru::new(&mut store, &format!("enc{l}.bwd"), input, config.enc_hidden, &mut rng)
            });
            encoder.push(EncoderLayer { fwd, bwd });
            input = config.enc_dim();
        }
        let k = vocab.size();
        let embed = Embedding::new(&mut store, "pred.embed", k, config.pred_embed, &mut rng);
        let pred = Gru::new(&mut store, "pred.gru", config.pred_embed, config.pred_hidden, &mut rng);
        let joint = JointNetwork::new(
            &mut store,
            config.enc_dim(),
            config.pred_hidden,
            config.joint_dim,
            k,
            &mut rng,
        );
        Ok(Self {
            config,
            store,
            vocab,
            encoder,
            embed,
            pred,
            joint,
            encoder_calls: AtomicU64::new(0),
        })
    }

    pub fn regime(&self) -> Regime {
        self.config.regime
    }

    /// Number of encoder forward passes since construction or the last reset.
    pub fn encoder_calls(&self) -> u64 {
        self.encoder_calls.load(Ordering::SeqCst)
    }

    pub fn reset_encoder_calls(&self) {
        self.encoder_calls.store(0, Ordering::SeqCst);
    }

    /// Prediction-network start symbol for a speaker slot: the prompt in the
    /// AFT regime, blank otherwise.
    pub fn start_token(&self, slot: usize) -> Result<TokenId> {
        match self.regime() {
            Regime::Aft => self
                .vocab
                .prompt(slot)
                .ok_or_else(|| MtlabError::Label(format!("no prompt for speaker slot {slot}"))),
            _ => Ok(self.vocab.blank()),
        }
    }

    pub fn encode(&self, features: &Array2) -> Result<Array2> {
        Ok(self.encode_with_cache(features)?.0)
    }

    pub fn encode_with_cache(&self, features: &Array2) -> Result<(Array2, EncoderCache)> {
        if features.cols() != self.config.feat_dim {
            return Err(MtlabError::Shape(format!(
                "features have {} dims, model expects {}",
                features.cols(),
                self.config.feat_dim
            )));
        }
        self.encoder_calls.fetch_add(1, Ordering::SeqCst);
        let mut x = features.clone();
        let mut caches = Vec::with_capacity(self.encoder.len());
        for layer in &self.encoder {
            let (f, fc) = layer.fwd.forward_seq(&self.store, &x, false);
            match &layer.bwd {
                Some(bwd) => {
                    let (b, bc) = bwd.forward_seq(&self.store, &x, true);
                    x = f.hcat(&b);
                    caches.push((fc, Some(bc)));
                }
                None => {
                    x = f;
                    caches.push((fc, None));
                }
            }
        }
        Ok((x, EncoderCache { layers: caches }))
    }

    pub fn encoder_backward(&self, cache: &EncoderCache, d_enc: &Array2, grads: &mut Gradients) {
        let mut d = d_enc.clone();
        for (layer, (fc, bc)) in self.encoder.iter().zip(&cache.layers).rev() {
            d = match (&layer.bwd, bc) {
                (Some(bwd), Some(bc)) => {
                    let (df, db) = d.hsplit(self.config.enc_hidden);
                    let mut dx = layer.fwd.backward_seq(&self.store, fc, &df, grads);
                    dx.add_assign(&bwd.backward_seq(&self.store, bc, &db, grads));
                    dx
                }
                _ => layer.fwd.backward_seq(&self.store, fc, &d, grads),
            };
        }
    }

    /// Prediction states for `context = [start, y1, .., yU]`, one row per entry.
    pub fn predict(&self, context: &[TokenId]) -> (Array2, PredCache) {
        let emb = self.embed.forward(&self.store, context);
        let (out, gru) = self.pred.forward_seq(&self.store, &emb, false);
        (
            out,
            PredCache {
                context: context.to_vec(),
                gru,
            },
        )
    }

    fn predict_backward(&self, cache: &PredCache, d_pred: &Array2, grads: &mut Gradients) {
        let d_emb = self.pred.backward_seq(&self.store, &cache.gru, d_pred, grads);
        self.embed.backward(&cache.context, &d_emb, grads);
    }

    /// Logit lattice for encoder states and a label sequence, with the
    /// prediction network started from `start`.
    pub fn lattice(
        &self,
        enc: &Array2,
        start: TokenId,
        labels: &[TokenId],
    ) -> Result<(LogitLattice, LatticeCache)> {
        let mut context = Vec::with_capacity(labels.len() + 1);
        context.push(start);
        context.extend_from_slice(labels);
        if let Some(&bad) = context.iter().find(|&&t| t >= self.vocab.size()) {
            return Err(MtlabError::Label(format!(
                "token {bad} outside vocabulary of size {}",
                self.vocab.size()
            )));
        }
        let (pred, pred_cache) = self.predict(&context);
        let (lat, joint) = self.joint.forward(&self.store, enc, &pred)?;
        Ok((
            lat,
            LatticeCache {
                pred: pred_cache,
                joint,
            },
        ))
    }

    /// Backward through joint and prediction network; returns `∂L/∂enc`.
    pub fn lattice_backward(
        &self,
        cache: &LatticeCache,
        d_logits: &crate::numerics::Array3,
        grads: &mut Gradients,
    ) -> Array2 {
        let (d_enc, d_pred) = self.joint.backward(&self.store, &cache.joint, d_logits, grads);
        self.predict_backward(&cache.pred, &d_pred, grads);
        d_enc
    }

    /// One prediction-network step for a batch of `(token, state)` rows.
    /// Row `i` of the result depends only on row `i` of the inputs.
    pub fn pred_step(&self, tokens: &[TokenId], state: &Array2) -> Array2 {
        let emb = self.embed.forward(&self.store, tokens);
        self.pred.step_batch(&self.store, &emb, state)
    }

    pub fn pred_initial_state(&self, batch: usize) -> Array2 {
        Array2::zeros(batch, self.config.pred_hidden)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::new();
        ck.set_meta("kind", "model");
        self.config.to_meta(&mut ck);
        for p in self.store.iter() {
            ck.push_array(p.name.clone(), p.value.clone());
        }
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let config = ModelConfig::from_meta(ck)?;
        let mut model = Self::new(config)?;
        model.load_params(ck)?;
        Ok(model)
    }

    /// Overwrite parameter values from the arrays of a checkpoint.
    pub fn load_params(&mut self, ck: &Checkpoint) -> Result<()> {
        for p in self.store.iter_mut() {
            let a = ck
                .array(&p.name)
                .ok_or_else(|| MtlabError::Checkpoint(format!("missing array `{}`", p.name)))?;
            if a.shape() != p.value.shape() {
                return Err(MtlabError::Checkpoint(format!(
                    "array `{}` has shape {:?}, model expects {:?}",
                    p.name,
                    a.shape(),
                    p.value.shape()
                )));
            }
            p.value = a.clone();
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transducer::rnnt_loss;
    use rand::Rng;

    pub(crate) fn tiny(mode: EncoderMode, regime: Regime) -> Model {
        Model::new(ModelConfig {
            base_vocab: 4,
            regime,
            feat_dim: 3,
            encoder_mode: mode,
            enc_layers: 2,
            enc_hidden: 3,
            pred_embed: 2,
            pred_hidden: 3,
            joint_dim: 4,
            init_seed: 11,
        })
        .unwrap()
    }

    fn feats(t: usize, f: usize, seed: u64) -> Array2 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_fn(t, f, |_, _| rng.gen_range(-1.0..1.0))
    }

    #[test]
    fn causal_encoder_ignores_future_frames() {
        let m = tiny(EncoderMode::Causal, Regime::Single);
        let x = feats(6, 3, 1);
        let full = m.encode(&x).unwrap();
        let prefix = m.encode(&x.slice_rows(0, 4)).unwrap();
        for t in 0..4 {
            assert_eq!(full.row(t), prefix.row(t));
        }
        assert_eq!(m.encoder_calls(), 2);
    }

    #[test]
    fn offline_encoder_sees_future_frames() {
        let m = tiny(EncoderMode::Offline, Regime::Single);
        let x = feats(6, 3, 1);
        let full = m.encode(&x).unwrap();
        let prefix = m.encode(&x.slice_rows(0, 4)).unwrap();
        assert_eq!(full.cols(), 6);
        assert_ne!(full.row(0), prefix.row(0));
    }

    #[test]
    fn stepwise_prediction_matches_sequence_pass() {
        let m = tiny(EncoderMode::Causal, Regime::Aft);
        let ctx = [4, 1, 3, 2];
        let (seq, _) = m.predict(&ctx);
        let mut h = m.pred_initial_state(1);
        for (i, &tok) in ctx.iter().enumerate() {
            h = m.pred_step(&[tok], &h);
            for (a, b) in h.row(0).iter().zip(seq.row(i)) {
                assert!((a - b).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn checkpoint_round_trip() {
        let m = tiny(EncoderMode::Offline, Regime::Tsot);
        let bytes = m.to_checkpoint().to_bytes().unwrap();
        let back = Model::from_checkpoint(&Checkpoint::from_bytes(&bytes).unwrap()).unwrap();
        assert_eq!(back.config, m.config);
        for (a, b) in back.store.iter().zip(m.store.iter()) {
            assert_eq!(a.value, b.value);
        }
    }

    #[test]
    fn lattice_loss_gradient_matches_finite_differences() {
        use crate::numerics::{grad_check, GradCheckConfig};
        for mode in [EncoderMode::Offline, EncoderMode::Causal] {
            let mut m = tiny(mode, Regime::Single);
            let x = feats(3, 3, 2);
            let labels = [2, 1];
            let loss = |m: &Model| {
                let enc = m.encode(&x).unwrap();
                let (lat, _) = m.lattice(&enc, 0, &labels).unwrap();
                rnnt_loss(&lat.log_softmax(), &labels).unwrap().loss
            };
            let grad = |m: &Model| {
                let mut g = m.store.zero_gradients();
                let (enc, ec) = m.encode_with_cache(&x).unwrap();
                let (lat, lc) = m.lattice(&enc, 0, &labels).unwrap();
                let out = rnnt_loss(&lat.log_softmax(), &labels).unwrap();
                let d_enc = m.lattice_backward(&lc, &out.grad_logits, &mut g);
                m.encoder_backward(&ec, &d_enc, &mut g);
                g
            };
            let snapshot = m.clone();
            let mut store = m.store.clone();
            let report = grad_check(
                &mut store,
                &mut |s| {
                    let mut mm = snapshot.clone();
                    mm.store = s.clone();
                    loss(&mm)
                },
                &mut |s| {
                    let mut mm = snapshot.clone();
                    mm.store = s.clone();
                    grad(&mm)
                },
                GradCheckConfig::default(),
            );
            assert!(report.passed, "{mode}: {:?}", report.worst());
            m.store = store;
        }
    }
}
