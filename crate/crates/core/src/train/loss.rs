//! Per-sample losses for the three systems and the distillation variant.
//! Each computes a [`LossReport`] and, when given a buffer, adds the
//! parameter gradients of the combined loss into it.

use crate::error::{MtlabError, Result};
use crate::labels::{Regime, TokenId};
use crate::model::Model;
use crate::numerics::{Array2, Gradients};
use crate::simdata::MixtureSample;
use crate::transducer::{kd_loss, rnnt_loss, LossReport};

fn require_regime(model: &Model, regime: Regime, what: &str) -> Result<()> {
    if model.regime() != regime {
        return Err(MtlabError::Config(format!(
            "{what} needs a {regime} model, got {}",
            model.regime()
        )));
    }
    Ok(())
}

/// Single-stream transducer loss on `features` with `labels`, started from
/// blank. Shared by the single-talker and serialized systems.
fn single_stream(
    model: &Model,
    features: &Array2,
    labels: &[TokenId],
    grads: Option<&mut Gradients>,
) -> Result<LossReport> {
    let (enc, enc_cache) = model.encode_with_cache(features)?;
    let start = model.start_token(0)?;
    let (lat, cache) = model.lattice(&enc, start, labels)?;
    let out = rnnt_loss(&lat.log_softmax(), labels)?;
    if let Some(g) = grads {
        let d_enc = model.lattice_backward(&cache, &out.grad_logits, g);
        model.encoder_backward(&enc_cache, &d_enc, g);
    }
    Ok(LossReport::rnnt_only(vec![out.loss]))
}

/// Transducer loss of the single-talker model on a single-talker sample.
pub fn loss_single(model: &Model, sample: &MixtureSample, grads: Option<&mut Gradients>) -> Result<LossReport> {
    require_regime(model, Regime::Single, "loss_single")?;
    if sample.num_speakers() != 1 {
        return Err(MtlabError::Config(format!(
            "sample {} has {} speakers; the single-talker loss takes one",
            sample.id,
            sample.num_speakers()
        )));
    }
    single_stream(model, &sample.mixture, &sample.transcripts[0].tokens, grads)
}

/// Transducer loss on the mixture against the serialized label stream.
pub fn loss_tsot(model: &Model, sample: &MixtureSample, grads: Option<&mut Gradients>) -> Result<LossReport> {
    if model.vocab.sc().is_none() {
        return Err(MtlabError::Config(format!(
            "serialized loss needs <sc> in the vocabulary; model regime is {}",
            model.regime()
        )));
    }
    single_stream(model, &sample.mixture, &sample.tsot.stream, grads)
}

/// Start token and label body for speaker slot `m`, checking the prompt.
fn aft_target<'a>(model: &Model, sample: &'a MixtureSample, m: usize) -> Result<(TokenId, &'a [TokenId])> {
    let lab = &sample.aft.speakers[m];
    let want = model.vocab.prompt(m);
    if lab.first().copied() != want {
        return Err(MtlabError::Label(format!(
            "sample {} speaker {}: label must start with prompt {:?}, found {:?}",
            sample.id,
            m + 1,
            want,
            lab.first()
        )));
    }
    Ok((lab[0], &lab[1..]))
}

/// Sum of per-speaker transducer losses over one shared encoding of the
/// mixture, with each speaker's prediction network started from its prompt.
pub fn loss_aft(model: &Model, sample: &MixtureSample, grads: Option<&mut Gradients>) -> Result<LossReport> {
    aft_impl(model, sample, None, grads)
}

/// [`loss_aft`] plus `lambda` times the distillation loss from the model's
/// own lattices on each speaker's clean (timeline-padded) features. The
/// teacher lattices are constants: no gradient flows through them.
pub fn loss_aft_kd(
    model: &Model,
    sample: &MixtureSample,
    lambda: f64,
    grads: Option<&mut Gradients>,
) -> Result<LossReport> {
    aft_impl(model, sample, Some((model, lambda)), grads)
}

/// [`loss_aft_kd`] with the teacher lattices taken from a separate, frozen
/// copy of the model. With `teacher` equal to `model` the two coincide;
/// keeping them apart lets finite differences see the stop-gradient.
pub fn loss_aft_kd_with_teacher(
    model: &Model,
    teacher: &Model,
    sample: &MixtureSample,
    lambda: f64,
    grads: Option<&mut Gradients>,
) -> Result<LossReport> {
    if teacher.config != model.config {
        return Err(MtlabError::Config("teacher and student configurations differ".into()));
    }
    aft_impl(model, sample, Some((teacher, lambda)), grads)
}

fn aft_impl(
    model: &Model,
    sample: &MixtureSample,
    kd: Option<(&Model, f64)>,
    grads: Option<&mut Gradients>,
) -> Result<LossReport> {
    require_regime(model, Regime::Aft, "the prompt-token loss")?;
    let speakers = sample.aft.num_speakers();
    if kd.is_some() && sample.clean.len() != speakers {
        return Err(MtlabError::Shape(format!(
            "sample {}: {} clean inputs for {speakers} speakers",
            sample.id,
            sample.clean.len()
        )));
    }
    let targets = (0..speakers)
        .map(|m| aft_target(model, sample, m))
        .collect::<Result<Vec<_>>>()?;

    let (enc, enc_cache) = model.encode_with_cache(&sample.mixture)?;
    let mut per_speaker = Vec::with_capacity(speakers);
    let mut kd_total = 0.0;
    let mut d_enc: Option<Array2> = None;
    let mut grads = grads;
    for (m, &(start, body)) in targets.iter().enumerate() {
        let (lat, cache) = model.lattice(&enc, start, body)?;
        let student = lat.log_softmax();
        let out = rnnt_loss(&student, body)?;
        per_speaker.push(out.loss);
        let mut d_logits = out.grad_logits;
        if let Some((teacher, lambda)) = kd {
            let t_enc = teacher.encode(&sample.clean[m])?;
            let (t_lat, _) = teacher.lattice(&t_enc, start, body)?;
            let kd = kd_loss(&t_lat.log_softmax(), &student)?;
            kd_total += kd.loss;
            for (d, &g) in d_logits.as_mut_slice().iter_mut().zip(kd.grad_logits.as_slice()) {
                *d += lambda * g;
            }
        }
        if let Some(g) = grads.as_deref_mut() {
            let d = model.lattice_backward(&cache, &d_logits, g);
            match &mut d_enc {
                Some(acc) => acc.add_assign(&d),
                None => d_enc = Some(d),
            }
        }
    }
    if let (Some(g), Some(d)) = (grads, d_enc) {
        model.encoder_backward(&enc_cache, &d, g);
    }
    Ok(match kd {
        Some((_, lambda)) => LossReport::new(per_speaker, kd_total, lambda),
        None => LossReport::rnnt_only(per_speaker),
    })
}

/// The loss a system trains on, with distillation when `kd_lambda` is set.
pub fn system_loss(
    model: &Model,
    sample: &MixtureSample,
    kd_lambda: Option<f64>,
    grads: Option<&mut Gradients>,
) -> Result<LossReport> {
    match (model.regime(), kd_lambda) {
        (Regime::Single, _) => loss_single(model, sample, grads),
        (Regime::Tsot, _) => loss_tsot(model, sample, grads),
        (Regime::Aft, None) => loss_aft(model, sample, grads),
        (Regime::Aft, Some(l)) => loss_aft_kd(model, sample, l, grads),
    }
}
