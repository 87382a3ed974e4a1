//! Vocabulary regimes and the two multi-talker label constructions:
//! prompt-prefixed per-speaker labels and onset-serialized streams.

pub mod vocab;

pub use vocab::{Regime, TokenId, Vocabulary, BLANK};

use crate::error::{MtlabError, Result};
use serde::{Deserialize, Serialize};

/// One speaker's tokens with frame-level onsets.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimedTranscript {
    pub speaker: usize,
    pub tokens: Vec<TokenId>,
    pub onsets: Vec<usize>,
}

impl TimedTranscript {
    pub fn new(speaker: usize, tokens: Vec<TokenId>, onsets: Vec<usize>) -> Result<Self> {
        if tokens.is_empty() {
            return Err(MtlabError::Label("transcript must hold at least one token".into()));
        }
        if tokens.len() != onsets.len() {
            return Err(MtlabError::Label(format!(
                "{} tokens but {} onsets",
                tokens.len(),
                onsets.len()
            )));
        }
        if onsets.windows(2).any(|w| w[1] < w[0]) {
            return Err(MtlabError::Label("onsets must be non-decreasing".into()));
        }
        if tokens.contains(&BLANK) {
            return Err(MtlabError::Label("blank cannot appear in a transcript".into()));
        }
        Ok(Self {
            speaker,
            tokens,
            onsets,
        })
    }

    pub fn first_onset(&self) -> usize {
        self.onsets[0]
    }

    /// Shift all onsets by `delay` frames.
    pub fn shifted(&self, delay: usize) -> Self {
        Self {
            speaker: self.speaker,
            tokens: self.tokens.clone(),
            onsets: self.onsets.iter().map(|o| o + delay).collect(),
        }
    }
}

/// Per-speaker targets `[<spkm>, y₁, …]`, slot `m` = m-th speaker to start.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AftLabels {
    pub speakers: Vec<Vec<TokenId>>,
}

impl AftLabels {
    pub fn num_speakers(&self) -> usize {
        self.speakers.len()
    }

    /// Tokens after the prompt.
    pub fn body(&self, slot: usize) -> &[TokenId] {
        &self.speakers[slot][1..]
    }

    pub fn validate(&self, vocab: &Vocabulary) -> Result<()> {
        for (slot, seq) in self.speakers.iter().enumerate() {
            let prompt = vocab.prompt(slot).ok_or_else(|| {
                MtlabError::Label(format!("no prompt token for slot {slot} in {}", vocab.regime()))
            })?;
            if seq.first() != Some(&prompt) {
                return Err(MtlabError::Label(format!(
                    "slot {slot} label does not start with {}",
                    vocab.symbol(prompt)
                )));
            }
            if seq[1..].iter().any(|&t| vocab.prompt_slot(t).is_some()) {
                return Err(MtlabError::Label(format!(
                    "prompt token inside slot {slot} body"
                )));
            }
        }
        Ok(())
    }
}

/// Build AFT labels: order speakers by first onset and prefix each with the
/// matching prompt.
pub fn make_aft_labels(transcripts: &[TimedTranscript], vocab: &Vocabulary) -> Result<AftLabels> {
    if transcripts.is_empty() || transcripts.len() > 2 {
        return Err(MtlabError::Unsupported(format!(
            "{} speakers (supported: 1 or 2)",
            transcripts.len()
        )));
    }
    let mut order: Vec<&TimedTranscript> = transcripts.iter().collect();
    order.sort_by_key(|t| t.first_onset());
    if order.len() == 2 && order[0].first_onset() == order[1].first_onset() {
        return Err(MtlabError::AmbiguousOrder(order[0].first_onset()));
    }
    let speakers = order
        .iter()
        .enumerate()
        .map(|(slot, t)| {
            let prompt = vocab.prompt(slot).ok_or_else(|| {
                MtlabError::Config(format!("vocabulary regime {} has no prompts", vocab.regime()))
            })?;
            let mut seq = Vec::with_capacity(t.tokens.len() + 1);
            seq.push(prompt);
            seq.extend_from_slice(&t.tokens);
            Ok(seq)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(AftLabels { speakers })
}

/// A single onset-ordered stream with `<sc>` at every speaker switch.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TsotLabel {
    pub stream: Vec<TokenId>,
    /// Number of `<sc>` tokens.
    pub alpha: usize,
}

/// Merge transcripts by onset. Ties go to the lower speaker index, then to
/// the earlier position within the speaker.
pub fn serialize_tsot(transcripts: &[TimedTranscript], vocab: &Vocabulary) -> Result<TsotLabel> {
    let sc = vocab
        .sc()
        .ok_or_else(|| MtlabError::Config(format!("no <sc> token in {} regime", vocab.regime())))?;
    let mut events: Vec<(usize, usize, usize, TokenId)> = transcripts
        .iter()
        .flat_map(|t| {
            t.tokens
                .iter()
                .zip(&t.onsets)
                .enumerate()
                .map(move |(pos, (&tok, &on))| (on, t.speaker, pos, tok))
        })
        .collect();
    events.sort_unstable_by_key(|&(on, spk, pos, _)| (on, spk, pos));
    let mut stream = Vec::with_capacity(events.len() + transcripts.len());
    let mut alpha = 0;
    let mut current = None;
    for (_, spk, _, tok) in events {
        if current.is_some_and(|c| c != spk) {
            stream.push(sc);
            alpha += 1;
        }
        current = Some(spk);
        stream.push(tok);
    }
    Ok(TsotLabel { stream, alpha })
}

/// Route tokens to two channels, toggling at each `<sc>`. Accepts any input.
pub fn deserialize_tsot(stream: &[TokenId], sc: TokenId) -> (Vec<TokenId>, Vec<TokenId>) {
    let mut channels = (Vec::new(), Vec::new());
    let mut second = false;
    for &t in stream {
        if t == sc {
            second = !second;
        } else if second {
            channels.1.push(t);
        } else {
            channels.0.push(t);
        }
    }
    channels
}
