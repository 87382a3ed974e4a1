//! Token error rates: edit distance, cpWER and report tables.

mod report;

pub use report::{render_table, Table, TableRow};

use crate::error::{MtlabError, Result};
use crate::labels::TokenId;
use serde::{Deserialize, Serialize};

/// Largest speaker count scored by exhaustive permutation search.
pub const MAX_SPEAKERS: usize = 4;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EditStats {
    pub distance: usize,
    pub sub: usize,
    pub ins: usize,
    pub del: usize,
}

impl EditStats {
    fn add(&mut self, o: &EditStats) {
        self.distance += o.distance;
        self.sub += o.sub;
        self.ins += o.ins;
        self.del += o.del;
    }
}

/// Unit-cost Levenshtein distance with an error breakdown taken from one
/// optimal backtrace. At each step the backtrace prefers the diagonal
/// (match or substitution), then deletion, then insertion.
pub fn edit_distance(reference: &[TokenId], hyp: &[TokenId]) -> EditStats {
    let (n, m) = (reference.len(), hyp.len());
    let w = m + 1;
    let mut d = vec![0usize; (n + 1) * w];
    for i in 0..=n {
        d[i * w] = i;
    }
    for j in 0..=m {
        d[j] = j;
    }
    for i in 1..=n {
        for j in 1..=m {
            let diag = d[(i - 1) * w + j - 1] + usize::from(reference[i - 1] != hyp[j - 1]);
            let del = d[(i - 1) * w + j] + 1;
            let ins = d[i * w + j - 1] + 1;
            d[i * w + j] = diag.min(del).min(ins);
        }
    }
    let mut stats = EditStats {
        distance: d[n * w + m],
        ..EditStats::default()
    };
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        let here = d[i * w + j];
        if i > 0 && j > 0 {
            let cost = usize::from(reference[i - 1] != hyp[j - 1]);
            if d[(i - 1) * w + j - 1] + cost == here {
                stats.sub += cost;
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if i > 0 && d[(i - 1) * w + j] + 1 == here {
            stats.del += 1;
            i -= 1;
        } else {
            stats.ins += 1;
            j -= 1;
        }
    }
    stats
}

/// Score of one sample under its best speaker-to-slot assignment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleScore {
    pub errors: EditStats,
    pub ref_len: usize,
    /// `permutation[i]` is the hypothesis slot matched to reference `i`.
    pub permutation: Vec<usize>,
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out.sort();
    out
}

/// Concatenated minimum-permutation errors for one sample. The shorter of
/// `refs` / `hyps` is padded with empty sequences.
pub fn cpwer(refs: &[Vec<TokenId>], hyps: &[Vec<TokenId>]) -> Result<SampleScore> {
    let m = refs.len().max(hyps.len());
    if m > MAX_SPEAKERS {
        return Err(MtlabError::Unsupported(format!(
            "cpWER over {m} speakers; at most {MAX_SPEAKERS} supported"
        )));
    }
    let empty = Vec::new();
    let r = |i: usize| refs.get(i).unwrap_or(&empty);
    let h = |i: usize| hyps.get(i).unwrap_or(&empty);
    let table: Vec<Vec<EditStats>> =
        (0..m).map(|i| (0..m).map(|j| edit_distance(r(i), h(j))).collect()).collect();
    let mut best: Option<(EditStats, Vec<usize>)> = None;
    for perm in permutations(m) {
        let mut total = EditStats::default();
        for (i, &j) in perm.iter().enumerate() {
            total.add(&table[i][j]);
        }
        if best.as_ref().is_none_or(|(b, _)| total.distance < b.distance) {
            best = Some((total, perm));
        }
    }
    let (errors, permutation) = best.unwrap();
    Ok(SampleScore {
        errors,
        ref_len: refs.iter().map(Vec::len).sum(),
        permutation,
    })
}

/// Accumulated errors over a set of samples.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CorpusScore {
    pub samples: usize,
    pub errors: EditStats,
    pub ref_len: usize,
}

impl CorpusScore {
    pub fn add(&mut self, s: &SampleScore) {
        self.samples += 1;
        self.errors.add(&s.errors);
        self.ref_len += s.ref_len;
    }

    /// Percent; `None` when there are no reference tokens.
    pub fn cpwer(&self) -> Option<f64> {
        (self.ref_len > 0).then(|| 100.0 * self.errors.distance as f64 / self.ref_len as f64)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub id: String,
    pub speakers: usize,
    pub score: SampleScore,
}

/// cpWER split by condition: samples with one reference speaker (1spk)
/// versus two (2spk).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub one_spk: CorpusScore,
    pub two_spk: CorpusScore,
    pub records: Vec<SampleRecord>,
}

impl EvalResult {
    pub fn add(&mut self, id: &str, refs: &[Vec<TokenId>], hyps: &[Vec<TokenId>]) -> Result<()> {
        let score = cpwer(refs, hyps)?;
        match refs.len() {
            1 => self.one_spk.add(&score),
            _ => self.two_spk.add(&score),
        }
        self.records.push(SampleRecord {
            id: id.to_string(),
            speakers: refs.len(),
            score,
        });
        Ok(())
    }

    pub fn overall(&self) -> CorpusScore {
        let mut c = self.one_spk;
        c.samples += self.two_spk.samples;
        c.errors.add(&self.two_spk.errors);
        c.ref_len += self.two_spk.ref_len;
        c
    }
}
