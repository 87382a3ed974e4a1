//! Training: losses for each system, run configuration and the epoch loop.

mod config;
mod loss;
mod pipeline;
mod trainer;

pub use config::TrainConfig;
pub use loss::{loss_aft, loss_aft_kd, loss_aft_kd_with_teacher, loss_single, loss_tsot, system_loss};
pub use pipeline::{beam_sweep, evaluate_model, evaluate_with, tune_fusion, BeamPoint, FusionChoice, SWEEP_BEAMS};
pub use trainer::{EpochRecord, Trainer};

use crate::error::Result;
use crate::model::Model;
use crate::numerics::{grad_check, GradCheckConfig, GradCheckReport};
use crate::simdata::MixtureSample;

/// Finite-difference check of [`system_loss`] gradients for one sample.
/// With distillation the teacher stays frozen at `model` while the probes
/// move the student, matching the stop-gradient of the analytic gradient.
pub fn check_gradients(
    model: &Model,
    sample: &MixtureSample,
    kd_lambda: Option<f64>,
    config: GradCheckConfig,
) -> Result<GradCheckReport> {
    // Surface label or shape errors before the probe loop swallows them.
    system_loss(model, sample, kd_lambda, None)?;
    let with = |store: &crate::numerics::ParamStore| {
        let mut m = model.clone();
        m.store = store.clone();
        m
    };
    let mut store = model.store.clone();
    Ok(grad_check(
        &mut store,
        &mut |s| {
            loss_at(&with(s), model, sample, kd_lambda, None)
                .map(|r| r.combined)
                .unwrap_or(f64::NAN)
        },
        &mut |s| {
            let m = with(s);
            let mut g = m.store.zero_gradients();
            let _ = loss_at(&m, model, sample, kd_lambda, Some(&mut g));
            g
        },
        config,
    ))
}

fn loss_at(
    student: &Model,
    teacher: &Model,
    sample: &MixtureSample,
    kd_lambda: Option<f64>,
    grads: Option<&mut crate::numerics::Gradients>,
) -> Result<crate::transducer::LossReport> {
    match kd_lambda {
        Some(l) if student.regime() == crate::labels::Regime::Aft => {
            loss_aft_kd_with_teacher(student, teacher, sample, l, grads)
        }
        _ => system_loss(student, sample, kd_lambda, grads),
    }
}
