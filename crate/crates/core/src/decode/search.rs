//! Greedy and alignment-length synchronous beam search.

use super::{fuse, lm_history, DecodeConfig, DecodeStats, EncodedInput, Fusion, Hypothesis};
use crate::labels::{Regime, TokenId};
use crate::model::Model;
use crate::numerics::{log_add, log_softmax_into, Array2};
use std::collections::HashMap;

/// Which non-blank outputs may be emitted in a regime: lexical tokens
/// always, `<sc>` only in the serialized regime, prompts never.
pub(crate) fn emittable(model: &Model, k: TokenId) -> bool {
    let v = &model.vocab;
    v.is_lexical(k) || (model.regime() == Regime::Tsot && v.sc() == Some(k))
}

/// Internal-LM log-probabilities for rows of projected prediction states:
/// the joint evaluated without its encoder term, renormalized over the
/// lexical tokens. Other entries are `-inf`.
pub(crate) fn ilm_rows(model: &Model, pred_proj: &Array2) -> Array2 {
    let logits = model.joint.logits_without_encoder(&model.store, pred_proj);
    let k = logits.cols();
    let lexical: Vec<TokenId> = model.vocab.lexical_ids().collect();
    let mut out = Array2::from_fn(logits.rows(), k, |_, _| f64::NEG_INFINITY);
    let mut sub = vec![0.0; lexical.len()];
    let mut lp = vec![0.0; lexical.len()];
    for r in 0..logits.rows() {
        for (s, &id) in sub.iter_mut().zip(&lexical) {
            *s = logits.get(r, id);
        }
        log_softmax_into(&sub, &mut lp);
        for (&v, &id) in lp.iter().zip(&lexical) {
            out.set(r, id, v);
        }
    }
    out
}

/// Score increments for emitting `k` after `tokens`:
/// `(lm, ilm)` log-probabilities, zero when fusion is off or `k` is not
/// lexical. Blank is never passed here.
fn fusion_terms(
    model: &Model,
    fusion: &Fusion,
    tokens: &[TokenId],
    ilm_row: Option<&[f64]>,
    k: TokenId,
) -> (f64, f64) {
    match fusion.lm {
        Some(lm) if model.vocab.is_lexical(k) => {
            let l = lm.score(lm_history(tokens, model.vocab.sc()), k);
            let i = ilm_row.map_or(0.0, |r| r[k]);
            (l, i)
        }
        _ => (0.0, 0.0),
    }
}

fn joint_logp(model: &Model, enc: &EncodedInput, t: usize, pred_proj: &[f64]) -> Vec<f64> {
    let e = Array2::from_vec(1, enc.proj.cols(), enc.proj.row(t).to_vec());
    let p = Array2::from_vec(1, pred_proj.len(), pred_proj.to_vec());
    let logits = model.joint.logits_from_projections(&model.store, &e, &p);
    let mut out = vec![0.0; logits.cols()];
    log_softmax_into(logits.row(0), &mut out);
    out
}

/// Frame-synchronous best-path decoding. At each step the candidate with
/// the highest fused total wins, blank first on ties; at most
/// `max_symbols_per_frame` labels are emitted before the frame is left.
pub fn greedy_decode(
    model: &Model,
    enc: &EncodedInput,
    start: TokenId,
    config: &DecodeConfig,
    fusion: &Fusion,
) -> Hypothesis {
    let frames = enc.proj.rows();
    let mut h = model.pred_step(&[start], &model.pred_initial_state(1));
    let mut pp = model.joint.project_prediction(&model.store, &h);
    let mut ilm = fusion.lm.map(|_| ilm_rows(model, &pp));
    let (mut tr, mut lm_sum, mut ilm_sum) = (0.0, 0.0, 0.0);
    let mut tokens = Vec::new();
    for t in 0..frames {
        let mut emitted = 0;
        loop {
            let logp = joint_logp(model, enc, t, pp.row(0));
            let mut best = (fuse(tr + logp[0], lm_sum, ilm_sum, fusion), None);
            if emitted < config.max_symbols_per_frame {
                for (k, &lpk) in logp.iter().enumerate().skip(1) {
                    if !emittable(model, k) {
                        continue;
                    }
                    let (l, i) = fusion_terms(model, fusion, &tokens, ilm.as_ref().map(|a| a.row(0)), k);
                    let s = fuse(tr + lpk, lm_sum + l, ilm_sum + i, fusion);
                    if s > best.0 {
                        best = (s, Some((k, l, i)));
                    }
                }
            }
            match best.1 {
                None => {
                    tr += logp[0];
                    break;
                }
                Some((k, l, i)) => {
                    tr += logp[k];
                    lm_sum += l;
                    ilm_sum += i;
                    tokens.push(k);
                    emitted += 1;
                    h = model.pred_step(&[k], &h);
                    pp = model.joint.project_prediction(&model.store, &h);
                    ilm = fusion.lm.map(|_| ilm_rows(model, &pp));
                }
            }
        }
    }
    Hypothesis {
        start,
        alignment_length: frames + tokens.len(),
        tokens,
        score: fuse(tr, lm_sum, ilm_sum, fusion),
        transducer: tr,
        lm: lm_sum,
        ilm: ilm_sum,
    }
}

#[derive(Clone, Debug)]
struct Hyp {
    tokens: Vec<TokenId>,
    tr: f64,
    lm: f64,
    ilm: f64,
    /// Next frame to consume; equals T once the final blank is taken.
    t: usize,
    /// Labels emitted at frame `t` so far.
    sym: usize,
    /// Prediction state after the whole context, or the parent's state
    /// while `pending` is set.
    h: Vec<f64>,
    pending: Option<TokenId>,
    pred_proj: Vec<f64>,
    ilm_logp: Vec<f64>,
}

struct Job {
    start: TokenId,
    beam: Vec<Hyp>,
    finals: Vec<Hyp>,
}

/// Beam search for several prompts over one shared encoding. Every
/// prediction-network step and joint evaluation for all live hypotheses of
/// all jobs is issued as one batched call per alignment length; rows never
/// interact, so each job's result equals a solo run bit for bit.
pub fn alsd_batched(
    model: &Model,
    enc: &EncodedInput,
    starts: &[TokenId],
    config: &DecodeConfig,
    fusion: &Fusion,
    stats: &mut DecodeStats,
) -> Vec<Vec<Hypothesis>> {
    let frames = enc.proj.rows();
    let hidden = model.config.pred_hidden;
    let beam = config.beam.max(1);
    let mut jobs: Vec<Job> = starts
        .iter()
        .map(|&start| Job {
            start,
            beam: vec![Hyp {
                tokens: Vec::new(),
                tr: 0.0,
                lm: 0.0,
                ilm: 0.0,
                t: 0,
                sym: 0,
                h: vec![0.0; hidden],
                pending: Some(start),
                pred_proj: Vec::new(),
                ilm_logp: Vec::new(),
            }],
            finals: Vec::new(),
        })
        .collect();
    if frames == 0 {
        return jobs
            .into_iter()
            .map(|j| vec![finish(&j.beam[0], j.start, 0, fusion)])
            .collect();
    }

    while jobs.iter().any(|j| !j.beam.is_empty()) {
        // Advance the prediction network for hypotheses that just emitted.
        let pending: Vec<(usize, usize)> = jobs
            .iter()
            .enumerate()
            .flat_map(|(ji, j)| {
                j.beam
                    .iter()
                    .enumerate()
                    .filter(|(_, h)| h.pending.is_some())
                    .map(move |(hi, _)| (ji, hi))
            })
            .collect();
        if !pending.is_empty() {
            let toks: Vec<TokenId> = pending.iter().map(|&(j, h)| jobs[j].beam[h].pending.unwrap()).collect();
            let mut state = Array2::zeros(pending.len(), hidden);
            for (r, &(j, h)) in pending.iter().enumerate() {
                state.row_mut(r).copy_from_slice(&jobs[j].beam[h].h);
            }
            let next = model.pred_step(&toks, &state);
            let pp = model.joint.project_prediction(&model.store, &next);
            let ilm = fusion.lm.map(|_| ilm_rows(model, &pp));
            for (r, &(j, h)) in pending.iter().enumerate() {
                let hyp = &mut jobs[j].beam[h];
                hyp.h = next.row(r).to_vec();
                hyp.pred_proj = pp.row(r).to_vec();
                hyp.ilm_logp = ilm.as_ref().map_or(Vec::new(), |a| a.row(r).to_vec());
                hyp.pending = None;
            }
            stats.pred_batches += 1;
        }

        // One joint call over every live hypothesis.
        let live: Vec<(usize, usize)> = jobs
            .iter()
            .enumerate()
            .flat_map(|(ji, j)| (0..j.beam.len()).map(move |hi| (ji, hi)))
            .collect();
        let width = live.len();
        let jd = enc.proj.cols();
        let mut e = Array2::zeros(width, jd);
        let mut p = Array2::zeros(width, jd);
        for (r, &(j, h)) in live.iter().enumerate() {
            let hyp = &jobs[j].beam[h];
            e.row_mut(r).copy_from_slice(enc.proj.row(hyp.t));
            p.row_mut(r).copy_from_slice(&hyp.pred_proj);
        }
        let logits = model.joint.logits_from_projections(&model.store, &e, &p);
        stats.joint_batches += 1;
        stats.max_joint_batch = stats.max_joint_batch.max(width);
        let k = logits.cols();
        let mut logp = Array2::zeros(width, k);
        for r in 0..width {
            log_softmax_into(logits.row(r), logp.row_mut(r));
        }

        let mut row = 0;
        for job in jobs.iter_mut() {
            let n = job.beam.len();
            let rows = row..row + n;
            row += n;
            if n == 0 {
                continue;
            }
            let mut cands: Vec<Hyp> = Vec::new();
            let mut index: HashMap<Vec<TokenId>, usize> = HashMap::new();
            let mut push = |c: Hyp, cands: &mut Vec<Hyp>| match index.get(&c.tokens) {
                Some(&i) => merge(&mut cands[i], c),
                None => {
                    index.insert(c.tokens.clone(), cands.len());
                    cands.push(c);
                }
            };
            for (hyp, r) in job.beam.iter().zip(rows) {
                let lp = logp.row(r);
                let mut blank = hyp.clone();
                blank.tr += lp[0];
                blank.t += 1;
                blank.sym = 0;
                push(blank, &mut cands);
                if hyp.sym >= config.max_symbols_per_frame {
                    continue;
                }
                let ilm_row = (!hyp.ilm_logp.is_empty()).then_some(&hyp.ilm_logp[..]);
                for (kk, &lpk) in lp.iter().enumerate().skip(1) {
                    if !emittable(model, kk) {
                        continue;
                    }
                    let (l, i) = fusion_terms(model, fusion, &hyp.tokens, ilm_row, kk);
                    let mut tokens = hyp.tokens.clone();
                    tokens.push(kk);
                    push(
                        Hyp {
                            tokens,
                            tr: hyp.tr + lpk,
                            lm: hyp.lm + l,
                            ilm: hyp.ilm + i,
                            t: hyp.t,
                            sym: hyp.sym + 1,
                            h: hyp.h.clone(),
                            pending: Some(kk),
                            pred_proj: Vec::new(),
                            ilm_logp: Vec::new(),
                        },
                        &mut cands,
                    );
                }
            }
            let mut order: Vec<usize> = (0..cands.len()).collect();
            let scores: Vec<f64> = cands.iter().map(|c| fuse(c.tr, c.lm, c.ilm, fusion)).collect();
            order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
            order.truncate(beam);
            job.beam.clear();
            for c in order.into_iter().map(|i| cands[i].clone()) {
                if c.t >= frames {
                    job.finals.push(c);
                } else {
                    job.beam.push(c);
                }
            }
        }
    }

    jobs.into_iter()
        .map(|job| {
            let mut out: Vec<Hypothesis> = job
                .finals
                .iter()
                .map(|h| finish(h, job.start, frames, fusion))
                .collect();
            out.sort_by(|a, b| b.score.total_cmp(&a.score));
            out
        })
        .collect()
}

/// Fold path `b` into `a` (same label sequence, same alignment length).
/// Transducer scores add in probability space; the frame-symbol count and
/// prediction state follow whichever path is already materialized.
fn merge(a: &mut Hyp, b: Hyp) {
    let better = b.tr > a.tr;
    a.tr = log_add(a.tr, b.tr);
    if better {
        a.sym = b.sym;
    }
    if a.pending.is_some() && b.pending.is_none() {
        a.h = b.h;
        a.pending = None;
        a.pred_proj = b.pred_proj;
        a.ilm_logp = b.ilm_logp;
    }
}

fn finish(h: &Hyp, start: TokenId, frames: usize, fusion: &Fusion) -> Hypothesis {
    Hypothesis {
        start,
        tokens: h.tokens.clone(),
        score: fuse(h.tr, h.lm, h.ilm, fusion),
        transducer: h.tr,
        lm: h.lm,
        ilm: h.ilm,
        alignment_length: frames + h.tokens.len(),
    }
}
