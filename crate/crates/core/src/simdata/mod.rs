//! Synthetic "speech": each token is a fixed feature pattern held for a few
//! frames, optionally overlapped with a delayed second talker.

mod augment;
mod export;

pub use augment::{augment, AugmentConfig};
pub use export::{read_jsonl, write_jsonl, DatasetRecord, SpeakerRecord};

use crate::error::{MtlabError, Result};
use crate::labels::{
    make_aft_labels, serialize_tsot, AftLabels, Regime, TimedTranscript, TokenId, TsotLabel,
    Vocabulary,
};
use crate::numerics::Array2;
use rand::seq::index::sample as sample_indices;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    /// K, blank included.
    pub vocab_size: usize,
    pub feat_dim: usize,
    pub min_tokens: usize,
    pub max_tokens: usize,
    pub d_min: usize,
    pub d_max: usize,
    pub silence_frames: usize,
    pub noise_sigma: f64,
    pub pattern_seed: u64,
    /// Out-degree of the token bigram chain that generates transcripts.
    pub successors: usize,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            vocab_size: 20,
            feat_dim: 16,
            min_tokens: 3,
            max_tokens: 8,
            d_min: 2,
            d_max: 4,
            silence_frames: 5,
            noise_sigma: 0.1,
            pattern_seed: 7,
            successors: 3,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(MtlabError::Config(m.to_string()));
        if self.vocab_size < 3 {
            return bad("vocab_size must be at least 3");
        }
        if self.feat_dim == 0 {
            return bad("feat_dim must be positive");
        }
        if self.min_tokens == 0 || self.min_tokens > self.max_tokens {
            return bad("need 1 <= min_tokens <= max_tokens");
        }
        if self.d_min == 0 || self.d_min > self.d_max {
            return bad("need 1 <= d_min <= d_max");
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad("noise_sigma must be finite and non-negative");
        }
        if self.successors == 0 || self.successors > self.vocab_size - 2 {
            return bad("successors must be in 1..=vocab_size-2");
        }
        Ok(())
    }

    /// FNV-1a over the canonical JSON form; ties exported datasets to the
    /// spec that can regenerate their features.
    pub fn fingerprint(&self) -> String {
        fnv1a_hex(&serde_json::to_string(self).expect("spec serializes"))
    }
}

/// 64-bit FNV-1a of `text` as 16 hex digits.
pub fn fnv1a_hex(text: &str) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in text.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    format!("{h:016x}")
}

/// Frozen token ↦ pattern table. Row 0 (blank) is unused and zero.
#[derive(Clone, Debug, PartialEq)]
pub struct PatternTable(pub Array2);

impl PatternTable {
    pub fn new(spec: &SynthSpec) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.pattern_seed);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let mut table = Array2::zeros(spec.vocab_size, spec.feat_dim);
        for k in 1..spec.vocab_size {
            for x in table.row_mut(k) {
                *x = normal.sample(&mut rng);
            }
        }
        Self(table)
    }

    pub fn pattern(&self, token: TokenId) -> &[f64] {
        self.0.row(token)
    }

    /// Token whose pattern is closest in Euclidean distance (blank excluded).
    pub fn nearest(&self, frame: &[f64]) -> TokenId {
        (1..self.0.rows())
            .map(|k| {
                let d: f64 = self.0.row(k).iter().zip(frame).map(|(a, b)| (a - b).powi(2)).sum();
                (k, d)
            })
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(k, _)| k)
            .unwrap()
    }
}

/// Sparse bigram chain over lexical tokens. No token follows itself, so
/// repeated tokens never need to be told apart by duration alone.
#[derive(Clone, Debug, PartialEq)]
pub struct TextModel {
    vocab_size: usize,
    next: Vec<Vec<(TokenId, f64)>>,
}

impl TextModel {
    pub fn new(spec: &SynthSpec) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.pattern_seed ^ 0x7465_7874);
        let mut next = vec![Vec::new(); spec.vocab_size];
        for (a, succ) in next.iter_mut().enumerate().skip(1) {
            let others: Vec<TokenId> = (1..spec.vocab_size).filter(|&b| b != a).collect();
            let picks = sample_indices(&mut rng, others.len(), spec.successors);
            let weights: Vec<f64> = (0..spec.successors).map(|_| rng.gen_range(0.5..1.5)).collect();
            let z: f64 = weights.iter().sum();
            *succ = picks.iter().zip(&weights).map(|(i, w)| (others[i], w / z)).collect();
        }
        Self {
            vocab_size: spec.vocab_size,
            next,
        }
    }

    pub fn successors(&self, token: TokenId) -> &[(TokenId, f64)] {
        &self.next[token]
    }

    pub fn sample(&self, len: usize, rng: &mut impl Rng) -> Vec<TokenId> {
        let mut out = Vec::with_capacity(len);
        let mut cur = rng.gen_range(1..self.vocab_size);
        out.push(cur);
        while out.len() < len {
            let r: f64 = rng.gen();
            let succ = &self.next[cur];
            let mut acc = 0.0;
            cur = succ.last().unwrap().0;
            for &(b, p) in succ {
                acc += p;
                if r < acc {
                    cur = b;
                    break;
                }
            }
            out.push(cur);
        }
        out
    }
}

/// Render `tokens` as features: leading silence, then each token's pattern
/// for a uniform duration in `[d_min, d_max]`, plus Gaussian noise.
pub fn synth_utterance(
    tokens: &[TokenId],
    spec: &SynthSpec,
    patterns: &PatternTable,
    rng: &mut impl Rng,
) -> Result<(Array2, TimedTranscript)> {
    let durations: Vec<usize> = tokens.iter().map(|_| rng.gen_range(spec.d_min..=spec.d_max)).collect();
    render(tokens, &durations, spec, patterns, rng)
}

/// [`synth_utterance`] with the durations given.
pub fn render(
    tokens: &[TokenId],
    durations: &[usize],
    spec: &SynthSpec,
    patterns: &PatternTable,
    rng: &mut impl Rng,
) -> Result<(Array2, TimedTranscript)> {
    if tokens.is_empty() || tokens.len() > spec.max_tokens {
        return Err(MtlabError::Label(format!(
            "utterance needs 1..={} tokens, got {}",
            spec.max_tokens,
            tokens.len()
        )));
    }
    if let Some(&t) = tokens.iter().find(|&&t| t == 0 || t >= spec.vocab_size) {
        return Err(MtlabError::Label(format!("token {t} is not a lexical base token")));
    }
    if durations.len() != tokens.len() || durations.contains(&0) {
        return Err(MtlabError::Label("one positive duration per token required".into()));
    }
    let frames = spec.silence_frames + durations.iter().sum::<usize>();
    let mut feats = Array2::zeros(frames, spec.feat_dim);
    let mut onsets = Vec::with_capacity(tokens.len());
    let mut t = spec.silence_frames;
    for (&tok, &d) in tokens.iter().zip(durations) {
        onsets.push(t);
        for _ in 0..d {
            feats.row_mut(t).copy_from_slice(patterns.pattern(tok));
            t += 1;
        }
    }
    if spec.noise_sigma > 0.0 {
        let normal = Normal::new(0.0, spec.noise_sigma).unwrap();
        for x in feats.as_mut_slice() {
            *x += normal.sample(rng);
        }
    }
    Ok((feats, TimedTranscript::new(0, tokens.to_vec(), onsets)?))
}

/// One training or evaluation example. Single-talker samples have one entry
/// in `clean` and `transcripts` and a delay of 0.
#[derive(Clone, Debug, PartialEq)]
pub struct MixtureSample {
    pub id: String,
    pub index: u64,
    pub mixture: Array2,
    /// Per-speaker clean features on the mixture timeline.
    pub clean: Vec<Array2>,
    pub delay_frames: usize,
    /// Speaker 1 first; onsets on the mixture timeline.
    pub transcripts: Vec<TimedTranscript>,
    /// Prompt-prefixed labels over the K+2 vocabulary.
    pub aft: AftLabels,
    /// Serialized labels over the K+1 vocabulary.
    pub tsot: TsotLabel,
}

impl MixtureSample {
    pub fn num_speakers(&self) -> usize {
        self.transcripts.len()
    }

    pub fn frames(&self) -> usize {
        self.mixture.rows()
    }

    /// Reference token sequences, one per speaker.
    pub fn references(&self) -> Vec<Vec<TokenId>> {
        self.transcripts.iter().map(|t| t.tokens.clone()).collect()
    }

    pub fn single(features: Array2, transcript: TimedTranscript, base_vocab: usize) -> Result<Self> {
        let transcripts = vec![TimedTranscript { speaker: 0, ..transcript }];
        let (aft, tsot) = build_labels(&transcripts, base_vocab)?;
        Ok(Self {
            id: String::new(),
            index: 0,
            clean: vec![features.clone()],
            mixture: features,
            delay_frames: 0,
            transcripts,
            aft,
            tsot,
        })
    }
}

fn build_labels(transcripts: &[TimedTranscript], base_vocab: usize) -> Result<(AftLabels, TsotLabel)> {
    let aft_vocab = Vocabulary::synthetic(base_vocab, Regime::Aft)?;
    let tsot_vocab = aft_vocab.with_regime(Regime::Tsot);
    Ok((
        make_aft_labels(transcripts, &aft_vocab)?,
        serialize_tsot(transcripts, &tsot_vocab)?,
    ))
}

fn pad_to(x: &Array2, shift: usize, frames: usize) -> Array2 {
    let mut out = Array2::zeros(frames, x.cols());
    for t in 0..x.rows() {
        out.row_mut(t + shift).copy_from_slice(x.row(t));
    }
    out
}

/// Overlap `u2` onto `u1` starting `delay_frames` after the start of `u1`.
pub fn mix(
    u1: (&Array2, &TimedTranscript),
    u2: (&Array2, &TimedTranscript),
    delay_frames: usize,
    offset_frames: usize,
    base_vocab: usize,
) -> Result<MixtureSample> {
    if delay_frames < offset_frames {
        return Err(MtlabError::DelayBelowOffset {
            delay: delay_frames,
            offset: offset_frames,
        });
    }
    let (x1, y1) = u1;
    let (x2, y2) = u2;
    if x1.cols() != x2.cols() {
        return Err(MtlabError::Shape("speaker feature dims differ".into()));
    }
    let frames = x1.rows().max(delay_frames + x2.rows());
    let c1 = pad_to(x1, 0, frames);
    let c2 = pad_to(x2, delay_frames, frames);
    let mut mixture = c1.clone();
    mixture.add_assign(&c2);
    let t1 = TimedTranscript { speaker: 0, ..y1.clone() };
    let t2 = TimedTranscript { speaker: 1, ..y2.shifted(delay_frames) };
    if t2.first_onset() <= t1.first_onset() {
        return Err(MtlabError::AmbiguousOrder(t1.first_onset()));
    }
    let transcripts = vec![t1, t2];
    let (aft, tsot) = build_labels(&transcripts, base_vocab)?;
    Ok(MixtureSample {
        id: String::new(),
        index: 0,
        mixture,
        clean: vec![c1, c2],
        delay_frames,
        transcripts,
        aft,
        tsot,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixConfig {
    /// Minimum delay of the second talker, in frames.
    pub offset_frames: usize,
    /// Probability that a draw is a two-speaker mixture.
    pub two_speaker_prob: f64,
}

impl Default for MixConfig {
    fn default() -> Self {
        Self {
            offset_frames: 5,
            two_speaker_prob: 0.5,
        }
    }
}

/// Which independent sample stream to draw from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
    Tune,
}

impl Split {
    fn salt(self) -> u64 {
        match self {
            Split::Train => 0,
            Split::Dev => 0x0000_6465_7600_0001,
            Split::Test => 0x0000_7465_7374_0002,
            Split::Tune => 0x0000_7475_6e65_0003,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
            Split::Tune => "tune",
        }
    }
}

/// Deterministic sample source: sample `i` of a split depends only on the
/// specs, the seed, the split and `i`.
#[derive(Clone, Debug)]
pub struct Corpus {
    pub spec: SynthSpec,
    pub mix: MixConfig,
    pub patterns: PatternTable,
    pub text: TextModel,
}

impl Corpus {
    pub fn new(spec: SynthSpec, mix: MixConfig) -> Result<Self> {
        spec.validate()?;
        if mix.offset_frames == 0 {
            return Err(MtlabError::Config(
                "offset_frames must be at least 1 so speaker order is unambiguous".into(),
            ));
        }
        if !(0.0..=1.0).contains(&mix.two_speaker_prob) {
            return Err(MtlabError::Config("two_speaker_prob must lie in [0, 1]".into()));
        }
        Ok(Self {
            patterns: PatternTable::new(&spec),
            text: TextModel::new(&spec),
            spec,
            mix,
        })
    }

    pub fn rng_for(seed: u64, split: Split, index: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ split.salt());
        rng.set_stream(index);
        rng
    }

    fn utterance(&self, rng: &mut ChaCha8Rng) -> Result<(Array2, TimedTranscript)> {
        let len = rng.gen_range(self.spec.min_tokens..=self.spec.max_tokens);
        let tokens = self.text.sample(len, rng);
        synth_utterance(&tokens, &self.spec, &self.patterns, rng)
    }

    pub fn sample(&self, seed: u64, split: Split, index: u64) -> Result<MixtureSample> {
        let mut rng = Self::rng_for(seed, split, index);
        let two = rng.gen_bool(self.mix.two_speaker_prob);
        let (x1, y1) = self.utterance(&mut rng)?;
        let mut s = if two {
            let (x2, y2) = self.utterance(&mut rng)?;
            let hi = x1.rows().max(self.mix.offset_frames);
            let delay = rng.gen_range(self.mix.offset_frames..=hi);
            mix((&x1, &y1), (&x2, &y2), delay, self.mix.offset_frames, self.spec.vocab_size)?
        } else {
            MixtureSample::single(x1, y1, self.spec.vocab_size)?
        };
        s.id = format!("{}-{index:06}", split.name());
        s.index = index;
        Ok(s)
    }

    /// Samples `start..start+count` of a split.
    pub fn samples(&self, seed: u64, split: Split, start: u64, count: usize) -> Result<Vec<MixtureSample>> {
        (start..start + count as u64).map(|i| self.sample(seed, split, i)).collect()
    }

    /// Endless stream of training samples from index 0.
    pub fn batch_stream(&self, seed: u64) -> impl Iterator<Item = Result<MixtureSample>> + '_ {
        (0u64..).map(move |i| self.sample(seed, Split::Train, i))
    }

    /// Token text for LM training, drawn from the transcript generator.
    pub fn text_corpus(&self, seed: u64, sentences: usize) -> Vec<Vec<TokenId>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6c6d_7465_7874);
        (0..sentences)
            .map(|_| {
                let len = rng.gen_range(self.spec.min_tokens..=self.spec.max_tokens);
                self.text.sample(len, &mut rng)
            })
            .collect()
    }
}
