//! Randomized self-checks against brute-force references. Used by the
//! `oracle-check` command and the acceptance suite.

use crate::error::Result;
use crate::eval::cpwer;
use crate::labels::{deserialize_tsot, serialize_tsot, Regime, TimedTranscript, TokenId, Vocabulary};
use crate::numerics::Array3;
use crate::transducer::{rnnt_loss, rnnt_loss_bruteforce, LogitLattice};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::time::Instant;

#[derive(Clone, Debug, Serialize)]
pub struct CheckReport {
    pub name: String,
    pub cases: usize,
    pub failures: usize,
    /// Largest deviation from the reference (0 for exact checks).
    pub max_abs_err: f64,
    pub tol: f64,
    pub seconds: f64,
}

impl CheckReport {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

/// Dynamic-programming loss against explicit path enumeration on random
/// lattices with T ≤ 4, U ≤ 3, K ≤ 5.
pub fn lattice_oracle(cases: usize, seed: u64, tol: f64) -> Result<CheckReport> {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut failures, mut max_err) = (0, 0.0f64);
    for _ in 0..cases {
        let t = rng.gen_range(1..=4);
        let u = rng.gen_range(0..=3);
        let k = rng.gen_range(2..=5);
        let scale = rng.gen_range(0.1..4.0);
        let logits = Array3::from_fn(t, u + 1, k, |_, _, _| scale * rng.gen_range(-1.0..1.0));
        let labels: Vec<TokenId> = (0..u).map(|_| rng.gen_range(1..k)).collect();
        let post = LogitLattice(logits).log_softmax();
        let fast = rnnt_loss(&post, &labels)?.loss;
        let slow = rnnt_loss_bruteforce(&post, &labels)?;
        let err = (fast - slow).abs();
        max_err = max_err.max(err);
        if err.is_nan() || err > tol {
            failures += 1;
        }
    }
    Ok(CheckReport {
        name: "lattice loss vs path enumeration".into(),
        cases,
        failures,
        max_abs_err: max_err,
        tol,
        seconds: started.elapsed().as_secs_f64(),
    })
}

/// Plain two-row Levenshtein distance.
fn levenshtein(a: &[TokenId], b: &[TokenId]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = (prev[j] + usize::from(x != y)).min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// cpWER errors against the minimum over both speaker assignments.
pub fn cpwer_oracle(cases: usize, seed: u64) -> Result<CheckReport> {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let seq = |rng: &mut ChaCha8Rng, max: usize| -> Vec<TokenId> {
        let n = rng.gen_range(0..=max);
        (0..n).map(|_| rng.gen_range(1..6)).collect()
    };
    let mut failures = 0;
    for _ in 0..cases {
        let refs = vec![seq(&mut rng, 7), seq(&mut rng, 7)];
        let hyps = vec![seq(&mut rng, 8), seq(&mut rng, 8)];
        let direct = levenshtein(&refs[0], &hyps[0]) + levenshtein(&refs[1], &hyps[1]);
        let swapped = levenshtein(&refs[0], &hyps[1]) + levenshtein(&refs[1], &hyps[0]);
        let score = cpwer(&refs, &hyps)?;
        if score.errors.distance != direct.min(swapped) || score.ref_len != refs[0].len() + refs[1].len() {
            failures += 1;
        }
    }
    Ok(CheckReport {
        name: "cpWER vs two-permutation minimum".into(),
        cases,
        failures,
        max_abs_err: 0.0,
        tol: 0.0,
        seconds: started.elapsed().as_secs_f64(),
    })
}

/// Serialize then deserialize random timestamped pairs; speaker 1 starts
/// strictly before speaker 2, onsets may interleave and tie.
pub fn tsot_round_trip(cases: usize, seed: u64) -> Result<CheckReport> {
    let started = Instant::now();
    let vocab = Vocabulary::synthetic(10, Regime::Tsot)?;
    let sc = vocab.sc().expect("tsot vocabulary");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut failures = 0;
    for _ in 0..cases {
        let first = rng.gen_range(0..5);
        let second = rng.gen_range(first + 1..first + 20);
        let speaker = |id: usize, start: usize, rng: &mut ChaCha8Rng| {
            let n = rng.gen_range(1..8);
            let mut on = start;
            let mut onsets = Vec::with_capacity(n);
            for i in 0..n {
                if i > 0 {
                    on += rng.gen_range(0..6);
                }
                onsets.push(on);
            }
            let tokens = (0..n).map(|_| rng.gen_range(1..10)).collect();
            TimedTranscript::new(id, tokens, onsets)
        };
        let a = speaker(0, first, &mut rng)?;
        let b = speaker(1, second, &mut rng)?;
        let label = serialize_tsot(&[a.clone(), b.clone()], &vocab)?;
        let (x, y) = deserialize_tsot(&label.stream, sc);
        if x != a.tokens || y != b.tokens {
            failures += 1;
        }
    }
    Ok(CheckReport {
        name: "serialized-label round trip".into(),
        cases,
        failures,
        max_abs_err: 0.0,
        tol: 0.0,
        seconds: started.elapsed().as_secs_f64(),
    })
}
