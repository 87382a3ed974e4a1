//! Decoding: greedy and beam search from one shared encoder pass, with
//! optional bigram-LM shallow fusion and internal-LM subtraction.

mod lm;
mod search;

pub use lm::BigramLm;
pub use search::{alsd_batched, greedy_decode};

use crate::error::{MtlabError, Result};
use crate::labels::{deserialize_tsot, Regime, TokenId};
use crate::model::Model;
use crate::numerics::Array2;
use serde::{Deserialize, Serialize};
use std::io::Write;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecodeMode {
    Greedy,
    Beam,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DecodeConfig {
    pub mode: DecodeMode,
    pub beam: usize,
    /// β: external LM weight.
    pub lm_weight: f64,
    /// γ: internal LM weight.
    pub ilm_weight: f64,
    pub max_symbols_per_frame: usize,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        Self {
            mode: DecodeMode::Beam,
            beam: 16,
            lm_weight: 0.3,
            ilm_weight: 0.2,
            max_symbols_per_frame: 5,
        }
    }
}

impl DecodeConfig {
    pub fn greedy() -> Self {
        Self {
            mode: DecodeMode::Greedy,
            beam: 1,
            lm_weight: 0.0,
            ilm_weight: 0.0,
            ..Self::default()
        }
    }

    pub fn beam(beam: usize) -> Self {
        Self {
            beam,
            lm_weight: 0.0,
            ilm_weight: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.beam == 0 {
            return Err(MtlabError::Config("beam must be at least 1".into()));
        }
        if !(self.lm_weight >= 0.0 && self.ilm_weight >= 0.0) {
            return Err(MtlabError::Config("lm_weight and ilm_weight must be >= 0".into()));
        }
        if self.max_symbols_per_frame == 0 {
            return Err(MtlabError::Config("max_symbols_per_frame must be at least 1".into()));
        }
        Ok(())
    }
}

/// External LM with its weights. Without an LM both terms are zero and
/// the fused score is the transducer score.
#[derive(Clone, Copy, Debug)]
pub struct Fusion<'a> {
    pub lm: Option<&'a BigramLm>,
    pub beta: f64,
    pub gamma: f64,
}

impl<'a> Fusion<'a> {
    pub fn none() -> Self {
        Self {
            lm: None,
            beta: 0.0,
            gamma: 0.0,
        }
    }

    pub fn new(lm: Option<&'a BigramLm>, config: &DecodeConfig) -> Self {
        Self {
            lm,
            beta: config.lm_weight,
            gamma: config.ilm_weight,
        }
    }
}

/// `transducer + β·lm − γ·ilm`
#[inline]
pub fn fuse(transducer: f64, lm: f64, ilm: f64, fusion: &Fusion) -> f64 {
    transducer + fusion.beta * lm - fusion.gamma * ilm
}

/// Fused score for emitting `label`: transducer log-probability plus the
/// weighted LM term minus the weighted internal-LM term.
pub fn ilme_fused_score(transducer_logp: f64, lm_logp: f64, ilm_logp: f64, beta: f64, gamma: f64) -> f64 {
    transducer_logp + beta * lm_logp - gamma * ilm_logp
}

/// LM history for the next label: the last lexical token on the active
/// channel, where `<sc>` toggles between two channels.
pub fn lm_history(tokens: &[TokenId], sc: Option<TokenId>) -> Option<TokenId> {
    let mut ch = 0;
    let mut last = [None, None];
    for &t in tokens {
        if Some(t) == sc {
            ch ^= 1;
        } else {
            last[ch] = Some(t);
        }
    }
    last[ch]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hypothesis {
    /// Prediction-network start symbol (the prompt for AFT models).
    pub start: TokenId,
    /// Emitted labels, start symbol excluded.
    pub tokens: Vec<TokenId>,
    pub score: f64,
    pub transducer: f64,
    pub lm: f64,
    pub ilm: f64,
    /// Frames plus labels.
    pub alignment_length: usize,
}

/// Encoder states and their joint projection, computed once per input.
#[derive(Clone, Debug, PartialEq)]
pub struct EncodedInput {
    pub states: Array2,
    pub proj: Array2,
}

pub fn encode_once(model: &Model, features: &Array2) -> Result<EncodedInput> {
    let states = model.encode(features)?;
    let proj = model.joint.project_encoder(&model.store, &states);
    Ok(EncodedInput { states, proj })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecodeStats {
    pub encoder_calls: u64,
    pub pred_batches: usize,
    pub joint_batches: usize,
    pub max_joint_batch: usize,
}

/// Decode every speaker slot from one encoding: one batched beam search
/// over all prompts, or greedy per prompt.
pub fn batched_multispeaker_decode(
    model: &Model,
    features: &Array2,
    starts: &[TokenId],
    config: &DecodeConfig,
    fusion: &Fusion,
) -> Result<(Vec<Hypothesis>, DecodeStats)> {
    config.validate()?;
    let before = model.encoder_calls();
    let enc = encode_once(model, features)?;
    let mut stats = DecodeStats::default();
    let hyps = match config.mode {
        DecodeMode::Greedy => starts
            .iter()
            .map(|&s| greedy_decode(model, &enc, s, config, fusion))
            .collect(),
        DecodeMode::Beam => alsd_batched(model, &enc, starts, config, fusion, &mut stats)
            .into_iter()
            .map(|mut nbest| nbest.swap_remove(0))
            .collect(),
    };
    stats.encoder_calls = model.encoder_calls() - before;
    Ok((hyps, stats))
}

/// Decoder output for one input, with hypotheses mapped to speaker slots.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleDecode {
    pub hyps: Vec<Hypothesis>,
    /// Per-slot lexical tokens; always at least two slots.
    pub slots: Vec<Vec<TokenId>>,
    pub stats: DecodeStats,
}

/// Decode an input according to the model's regime: both prompts for AFT,
/// one serialized stream split at `<sc>` for tSOT, one stream plus an empty
/// slot for the single-talker model.
pub fn decode_features(
    model: &Model,
    features: &Array2,
    config: &DecodeConfig,
    fusion: &Fusion,
) -> Result<SampleDecode> {
    let starts: Vec<TokenId> = match model.regime() {
        Regime::Aft => vec![model.start_token(0)?, model.start_token(1)?],
        _ => vec![model.start_token(0)?],
    };
    let (hyps, stats) = batched_multispeaker_decode(model, features, &starts, config, fusion)?;
    let slots = match model.regime() {
        Regime::Aft => hyps.iter().map(|h| model.vocab.strip_control(&h.tokens)).collect(),
        Regime::Tsot => {
            let sc = model.vocab.sc().expect("tsot vocabulary has <sc>");
            let (a, b) = deserialize_tsot(&hyps[0].tokens, sc);
            vec![a, b]
        }
        Regime::Single => vec![model.vocab.strip_control(&hyps[0].tokens), Vec::new()],
    };
    Ok(SampleDecode { hyps, slots, stats })
}

/// One line of decoder output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecodeRecord {
    pub id: String,
    pub slot: usize,
    pub tokens: Vec<TokenId>,
    pub transducer: f64,
    pub lm: f64,
    pub ilm: f64,
    pub score: f64,
    pub beam: usize,
    pub lm_weight: f64,
    pub ilm_weight: f64,
}

impl DecodeRecord {
    /// One record per slot. For single-stream regimes every slot carries
    /// the scores of the one hypothesis it came from.
    pub fn from_decode(id: &str, d: &SampleDecode, config: &DecodeConfig, fusion: &Fusion) -> Vec<Self> {
        let beam = match config.mode {
            DecodeMode::Greedy => 1,
            DecodeMode::Beam => config.beam,
        };
        d.slots
            .iter()
            .enumerate()
            .map(|(slot, tokens)| {
                let h = d.hyps.get(slot).unwrap_or(&d.hyps[0]);
                Self {
                    id: id.to_string(),
                    slot,
                    tokens: tokens.clone(),
                    transducer: h.transducer,
                    lm: h.lm,
                    ilm: h.ilm,
                    score: h.score,
                    beam,
                    lm_weight: fusion.beta,
                    ilm_weight: fusion.gamma,
                }
            })
            .collect()
    }
}

pub fn write_decode_jsonl(records: &[DecodeRecord], w: &mut impl Write) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut *w, r)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}
