//! JSON-lines dataset files. Features are not stored; they are regenerated
//! from the spec, seed, split and index and checked against the record.

use super::{Corpus, MixtureSample, Split};
use crate::error::{MtlabError, Result};
use crate::labels::TokenId;
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpeakerRecord {
    pub tokens: Vec<TokenId>,
    pub onsets: Vec<usize>,
    pub delay: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub id: String,
    pub split: Split,
    pub seed: u64,
    pub index: u64,
    pub speakers: Vec<SpeakerRecord>,
    pub spec_fingerprint: String,
}

impl DatasetRecord {
    pub fn from_sample(sample: &MixtureSample, corpus: &Corpus, split: Split, seed: u64) -> Self {
        Self {
            id: sample.id.clone(),
            split,
            seed,
            index: sample.index,
            speakers: sample
                .transcripts
                .iter()
                .enumerate()
                .map(|(i, t)| SpeakerRecord {
                    tokens: t.tokens.clone(),
                    onsets: t.onsets.clone(),
                    delay: if i == 0 { 0 } else { sample.delay_frames },
                })
                .collect(),
            spec_fingerprint: corpus.spec.fingerprint(),
        }
    }

    /// Rebuild the full sample and verify it matches this record.
    pub fn regenerate(&self, corpus: &Corpus) -> Result<MixtureSample> {
        if self.spec_fingerprint != corpus.spec.fingerprint() {
            return Err(MtlabError::Parse(format!(
                "{}: spec fingerprint {} does not match {}",
                self.id,
                self.spec_fingerprint,
                corpus.spec.fingerprint()
            )));
        }
        let sample = corpus.sample(self.seed, self.split, self.index)?;
        if Self::from_sample(&sample, corpus, self.split, self.seed) != *self {
            return Err(MtlabError::Parse(format!(
                "{}: record disagrees with regenerated sample",
                self.id
            )));
        }
        Ok(sample)
    }
}

pub fn write_jsonl(records: &[DatasetRecord], w: &mut impl Write) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut *w, r)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_jsonl(r: impl BufRead) -> Result<Vec<DatasetRecord>> {
    let mut out = Vec::new();
    for (n, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line)
                .map_err(|e| MtlabError::Parse(format!("line {}: {e}", n + 1)))?,
        );
    }
    Ok(out)
}
