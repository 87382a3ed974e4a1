use crate::error::{MtlabError, Result};
use crate::labels::TokenId;
use serde::{Deserialize, Serialize};

/// Add-one smoothed bigram LM over the lexical tokens `1..K`. History 0
/// stands for the start of a sequence.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BigramLm {
    base_vocab: usize,
    /// `logp[h][k]` for history `h` in `0..K` and token `k` in `0..K`;
    /// column 0 is unused.
    logp: Vec<Vec<f64>>,
    /// `ln` of the smoothed floor per history, used for unknown tokens.
    floor: Vec<f64>,
}

impl BigramLm {
    pub fn train(corpus: &[Vec<TokenId>], base_vocab: usize) -> Result<Self> {
        let mut counts = vec![vec![0.0f64; base_vocab]; base_vocab];
        for sent in corpus {
            let mut prev = 0;
            for &tok in sent {
                if tok == 0 || tok >= base_vocab {
                    return Err(MtlabError::Label(format!("LM corpus token {tok} is not lexical")));
                }
                counts[prev][tok] += 1.0;
                prev = tok;
            }
        }
        Ok(Self::from_counts(counts, 1.0))
    }

    /// All lexical tokens equally likely after every history.
    pub fn uniform(base_vocab: usize) -> Self {
        Self::from_counts(vec![vec![0.0; base_vocab]; base_vocab], 1.0)
    }

    /// Every history prefers `token` by a factor `strength` over the rest.
    pub fn biased(base_vocab: usize, token: TokenId, strength: f64) -> Self {
        let mut counts = vec![vec![0.0; base_vocab]; base_vocab];
        for row in &mut counts {
            row[token] = strength - 1.0;
        }
        Self::from_counts(counts, 1.0)
    }

    fn from_counts(counts: Vec<Vec<f64>>, add: f64) -> Self {
        let k = counts.len();
        let lexical = (k - 1) as f64;
        let mut logp = vec![vec![f64::NEG_INFINITY; k]; k];
        let mut floor = vec![0.0; k];
        for (h, row) in counts.iter().enumerate() {
            let total: f64 = row[1..].iter().sum::<f64>() + add * lexical;
            for tok in 1..k {
                logp[h][tok] = ((row[tok] + add) / total).ln();
            }
            floor[h] = (add / total).ln();
        }
        Self {
            base_vocab: k,
            logp,
            floor,
        }
    }

    pub fn base_vocab(&self) -> usize {
        self.base_vocab
    }

    /// `ln P(token | history)`; `None` history is sequence start. Unknown
    /// tokens get the smoothed floor.
    pub fn score(&self, history: Option<TokenId>, token: TokenId) -> f64 {
        let h = history.filter(|&h| h < self.base_vocab).unwrap_or(0);
        if token == 0 || token >= self.base_vocab {
            return self.floor[h];
        }
        self.logp[h][token]
    }

    /// Per-token perplexity of a text corpus.
    pub fn perplexity(&self, corpus: &[Vec<TokenId>]) -> f64 {
        let mut nll = 0.0;
        let mut n = 0usize;
        for sent in corpus {
            let mut prev = None;
            for &tok in sent {
                nll -= self.score(prev, tok);
                prev = Some(tok);
                n += 1;
            }
        }
        (nll / n.max(1) as f64).exp()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simdata::{Corpus, MixConfig, SynthSpec};

    #[test]
    fn every_history_is_normalized() {
        let corpus = Corpus::new(SynthSpec::default(), MixConfig::default()).unwrap();
        let lm = BigramLm::train(&corpus.text_corpus(1, 300), 20).unwrap();
        for h in std::iter::once(None).chain((1..20).map(Some)) {
            let s: f64 = (1..20).map(|k| lm.score(h, k).exp()).sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
        assert!(lm.score(None, 25) < lm.score(None, 3));
    }

    #[test]
    fn uniform_corpus_gives_near_uniform_conditionals() {
        let sents: Vec<Vec<usize>> = (0..200).map(|i| (1..5).map(|k| (k + i) % 4 + 1).collect()).collect();
        let lm = BigramLm::train(&sents, 5).unwrap();
        for k in 1..5 {
            assert!((lm.score(None, k) - 0.25f64.ln()).abs() < 0.02);
        }
        let u = BigramLm::uniform(5);
        assert!((u.score(Some(2), 3) - 0.25f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn bigram_beats_unigram_on_held_out_text() {
        let corpus = Corpus::new(SynthSpec::default(), MixConfig::default()).unwrap();
        let train = corpus.text_corpus(1, 500);
        let held = corpus.text_corpus(2, 200);
        let lm = BigramLm::train(&train, 20).unwrap();
        // Add-one unigram from the same counts.
        let mut c = vec![1.0; 20];
        for s in &train {
            for &t in s {
                c[t] += 1.0;
            }
        }
        let z: f64 = c[1..].iter().sum();
        let n: usize = held.iter().map(Vec::len).sum();
        let nll: f64 = held.iter().flatten().map(|&t| -(c[t] / z).ln()).sum();
        let unigram_ppl = (nll / n as f64).exp();
        assert!(lm.perplexity(&held) < unigram_ppl);
    }
}
