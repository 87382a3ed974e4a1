//! Evaluation helpers shared by the command line and the acceptance runs:
//! scoring a model on a split, tuning fusion weights and sweeping beams.

use crate::decode::{decode_features, BigramLm, DecodeConfig, DecodeRecord, Fusion};
use crate::error::Result;
use crate::eval::EvalResult;
use crate::model::Model;
use crate::simdata::MixtureSample;
use serde::{Deserialize, Serialize};

/// Decode every sample and score it against its references.
pub fn evaluate_with(
    model: &Model,
    samples: &[MixtureSample],
    config: &DecodeConfig,
    fusion: &Fusion,
) -> Result<(EvalResult, Vec<DecodeRecord>)> {
    let mut res = EvalResult::default();
    let mut records = Vec::new();
    for s in samples {
        let d = decode_features(model, &s.mixture, config, fusion)?;
        res.add(&s.id, &s.references(), &d.slots)?;
        records.extend(DecodeRecord::from_decode(&s.id, &d, config, fusion));
    }
    Ok((res, records))
}

/// Greedy decoding without an LM.
pub fn evaluate_model(model: &Model, samples: &[MixtureSample]) -> Result<EvalResult> {
    Ok(evaluate_with(model, samples, &DecodeConfig::greedy(), &Fusion::none())?.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FusionChoice {
    pub lm_weight: f64,
    pub ilm_weight: f64,
    /// 2spk cpWER on the tuning samples.
    pub cpwer_2spk: f64,
}

/// Grid search of (β, γ) on tuning samples, minimizing 2spk cpWER. The
/// (0, 0) point is always included, so the choice is never worse than
/// decoding without the LM on these samples. Ties keep the earlier point.
pub fn tune_fusion(
    model: &Model,
    samples: &[MixtureSample],
    lm: &BigramLm,
    base: &DecodeConfig,
    lm_weights: &[f64],
    ilm_weights: &[f64],
) -> Result<FusionChoice> {
    let mut grid = vec![(0.0, 0.0)];
    for &b in lm_weights {
        for &g in ilm_weights {
            if (b, g) != (0.0, 0.0) {
                grid.push((b, g));
            }
        }
    }
    let mut best: Option<FusionChoice> = None;
    for (b, g) in grid {
        let cfg = DecodeConfig {
            lm_weight: b,
            ilm_weight: g,
            ..base.clone()
        };
        let (res, _) = evaluate_with(model, samples, &cfg, &Fusion::new(Some(lm), &cfg))?;
        let w = res.two_spk.cpwer().unwrap_or(0.0);
        log::debug!("fusion grid β={b} γ={g}: 2spk cpWER {w:.2}");
        if best.as_ref().is_none_or(|c| w < c.cpwer_2spk) {
            best = Some(FusionChoice {
                lm_weight: b,
                ilm_weight: g,
                cpwer_2spk: w,
            });
        }
    }
    Ok(best.expect("grid is never empty"))
}

pub const SWEEP_BEAMS: [usize; 5] = [1, 2, 4, 8, 16];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BeamPoint {
    pub beam: usize,
    pub cpwer_1spk: Option<f64>,
    pub cpwer_2spk: Option<f64>,
    pub seconds: f64,
}

/// Beam-search cpWER for each beam size, LM-free.
pub fn beam_sweep(model: &Model, samples: &[MixtureSample], beams: &[usize]) -> Result<Vec<BeamPoint>> {
    beams
        .iter()
        .map(|&beam| {
            let started = std::time::Instant::now();
            let (res, _) = evaluate_with(model, samples, &DecodeConfig::beam(beam), &Fusion::none())?;
            Ok(BeamPoint {
                beam,
                cpwer_1spk: res.one_spk.cpwer(),
                cpwer_2spk: res.two_spk.cpwer(),
                seconds: started.elapsed().as_secs_f64(),
            })
        })
        .collect()
}
