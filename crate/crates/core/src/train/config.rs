use crate::decode::DecodeConfig;
use crate::error::{MtlabError, Result};
use crate::labels::Regime;
use crate::model::{EncoderMode, ModelConfig};
use crate::numerics::{AdamWConfig, WarmupSchedule};
use crate::simdata::{AugmentConfig, MixConfig, SynthSpec};
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Every knob of a training run in one flat document. Unknown keys are
/// rejected; missing keys take the toy-preset defaults.
///
/// The full-scale recipe this scales down from is available as
/// [`TrainConfig::full_scale`]: peak LR 1.5e-3 with 25k warmup steps,
/// 200 epochs, minibatch 256, distillation from epoch 180 with λ = 0.001,
/// and a 50-frame (0.5 s at 10 ms) speaker offset and leading silence.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub system: Regime,
    pub encoder_mode: EncoderMode,
    pub kd_enabled: bool,
    pub kd_lambda: f64,
    /// First epoch (0-based) whose steps include the distillation term.
    pub kd_start_epoch: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub samples_per_epoch: usize,
    pub peak_lr: f64,
    pub warmup_steps: u64,
    pub weight_decay: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    /// Global gradient-norm clip; 0 disables.
    pub clip_norm: f64,
    /// Model initialization and training stream.
    pub seed: u64,
    /// Dev/test/tune sets; shared across systems and seeds.
    pub data_seed: u64,
    pub dev_samples: usize,
    pub workers: usize,

    pub enc_layers: usize,
    pub enc_hidden: usize,
    pub pred_embed: usize,
    pub pred_hidden: usize,
    pub joint_dim: usize,

    pub vocab_size: usize,
    pub feat_dim: usize,
    pub min_tokens: usize,
    pub max_tokens: usize,
    pub d_min: usize,
    pub d_max: usize,
    pub silence_frames: usize,
    pub noise_sigma: f64,
    pub pattern_seed: u64,
    pub successors: usize,
    pub offset_frames: usize,
    pub two_speaker_prob: f64,

    pub augment: bool,
    pub gain_min: f64,
    pub gain_max: f64,
    pub time_masks: usize,
    pub time_mask_width: usize,
    pub freq_masks: usize,
    pub freq_mask_width: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::toy()
    }
}

impl TrainConfig {
    /// Desk-scale preset: K=20, F=16, 3–8 tokens of 2–4 frames, 5-frame
    /// offset, 64-unit layers, 200 epochs of 320 samples in batches of 16,
    /// distillation (when enabled) from epoch 180.
    pub fn toy() -> Self {
        let spec = SynthSpec::default();
        let aug = AugmentConfig::default();
        Self {
            system: Regime::Aft,
            encoder_mode: EncoderMode::Offline,
            kd_enabled: false,
            kd_lambda: 0.001,
            kd_start_epoch: 180,
            epochs: 200,
            batch_size: 16,
            samples_per_epoch: 320,
            peak_lr: 3e-3,
            warmup_steps: 200,
            weight_decay: 0.0,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            clip_norm: 5.0,
            seed: 1,
            data_seed: 1000,
            dev_samples: 100,
            workers: 1,
            enc_layers: 2,
            enc_hidden: 64,
            pred_embed: 16,
            pred_hidden: 64,
            joint_dim: 64,
            vocab_size: spec.vocab_size,
            feat_dim: spec.feat_dim,
            min_tokens: spec.min_tokens,
            max_tokens: spec.max_tokens,
            d_min: spec.d_min,
            d_max: spec.d_max,
            silence_frames: spec.silence_frames,
            noise_sigma: spec.noise_sigma,
            pattern_seed: spec.pattern_seed,
            successors: spec.successors,
            offset_frames: MixConfig::default().offset_frames,
            two_speaker_prob: 0.5,
            augment: aug.enabled,
            gain_min: aug.gain_min,
            gain_max: aug.gain_max,
            time_masks: aug.time_masks,
            time_mask_width: aug.time_mask_width,
            freq_masks: aug.freq_masks,
            freq_mask_width: aug.freq_mask_width,
        }
    }

    /// The full-scale recipe's optimization and timing hyperparameters.
    /// Far too slow to run here; kept so the scaled values have a reference.
    pub fn full_scale() -> Self {
        Self {
            kd_enabled: true,
            kd_lambda: 0.001,
            kd_start_epoch: 180,
            epochs: 200,
            batch_size: 256,
            peak_lr: 1.5e-3,
            warmup_steps: 25_000,
            offset_frames: 50,
            silence_frames: 50,
            ..Self::toy()
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let c: Self = serde_json::from_str(text).map_err(|e| MtlabError::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Stable hash of the canonical JSON form.
    pub fn fingerprint(&self) -> String {
        crate::simdata::fnv1a_hex(&serde_json::to_string(self).expect("config serializes"))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(MtlabError::Config(m));
        if !(self.kd_lambda >= 0.0 && self.kd_lambda.is_finite()) {
            return bad(format!("kd_lambda must be finite and >= 0, got {}", self.kd_lambda));
        }
        if self.kd_enabled && self.kd_start_epoch > self.epochs {
            return bad(format!(
                "kd_start_epoch {} exceeds epochs {}",
                self.kd_start_epoch, self.epochs
            ));
        }
        if self.kd_enabled && self.system != Regime::Aft {
            return bad("kd_enabled requires system = aft".into());
        }
        if self.batch_size == 0 || self.samples_per_epoch == 0 {
            return bad("batch_size and samples_per_epoch must be positive".into());
        }
        if !(self.peak_lr > 0.0 && self.peak_lr.is_finite()) {
            return bad("peak_lr must be positive".into());
        }
        if self.clip_norm < 0.0 {
            return bad("clip_norm must be >= 0".into());
        }
        self.synth_spec().validate()?;
        self.model_config().validate()?;
        self.augment_config().validate()?;
        if self.offset_frames == 0 {
            return bad("offset_frames must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.two_speaker_prob) {
            return bad("two_speaker_prob must lie in [0, 1]".into());
        }
        Ok(())
    }

    pub fn synth_spec(&self) -> SynthSpec {
        SynthSpec {
            vocab_size: self.vocab_size,
            feat_dim: self.feat_dim,
            min_tokens: self.min_tokens,
            max_tokens: self.max_tokens,
            d_min: self.d_min,
            d_max: self.d_max,
            silence_frames: self.silence_frames,
            noise_sigma: self.noise_sigma,
            pattern_seed: self.pattern_seed,
            successors: self.successors,
        }
    }

    /// Mixing for evaluation sets; always the configured proportion.
    pub fn mix_config(&self) -> MixConfig {
        MixConfig {
            offset_frames: self.offset_frames,
            two_speaker_prob: self.two_speaker_prob,
        }
    }

    /// Mixing for the training stream: the single-talker system only ever
    /// sees single-talker data.
    pub fn train_mix_config(&self) -> MixConfig {
        MixConfig {
            two_speaker_prob: if self.system == Regime::Single { 0.0 } else { self.two_speaker_prob },
            ..self.mix_config()
        }
    }

    pub fn augment_config(&self) -> AugmentConfig {
        AugmentConfig {
            enabled: self.augment,
            gain_min: self.gain_min,
            gain_max: self.gain_max,
            time_masks: self.time_masks,
            time_mask_width: self.time_mask_width,
            freq_masks: self.freq_masks,
            freq_mask_width: self.freq_mask_width,
        }
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            base_vocab: self.vocab_size,
            regime: self.system,
            feat_dim: self.feat_dim,
            encoder_mode: self.encoder_mode,
            enc_layers: self.enc_layers,
            enc_hidden: self.enc_hidden,
            pred_embed: self.pred_embed,
            pred_hidden: self.pred_hidden,
            joint_dim: self.joint_dim,
            init_seed: self.seed,
        }
    }

    pub fn adamw_config(&self) -> AdamWConfig {
        AdamWConfig {
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            eps: self.adam_eps,
            weight_decay: self.weight_decay,
        }
    }

    pub fn schedule(&self) -> WarmupSchedule {
        WarmupSchedule {
            peak: self.peak_lr,
            warmup: self.warmup_steps,
        }
    }

    pub fn steps_per_epoch(&self) -> usize {
        self.samples_per_epoch.div_ceil(self.batch_size)
    }

    /// Decoding used for per-epoch dev scoring.
    pub fn dev_decode_config(&self) -> DecodeConfig {
        DecodeConfig::greedy()
    }

    /// Whether steps of `epoch` include the distillation term.
    pub fn kd_active(&self, epoch: usize) -> bool {
        self.kd_enabled && epoch >= self.kd_start_epoch
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips_and_rejects_unknown_keys() {
        let c = TrainConfig::toy();
        assert_eq!(TrainConfig::from_json(&c.to_json()).unwrap(), c);
        let err = TrainConfig::from_json(r#"{"epochs": 3, "learning_rate": 0.1}"#).unwrap_err();
        assert!(err.to_string().contains("learning_rate"), "{err}");
        let partial = TrainConfig::from_json(r#"{"epochs": 3, "kd_start_epoch": 2}"#).unwrap();
        assert_eq!(partial.epochs, 3);
        assert_eq!(partial.batch_size, 16);
    }

    #[test]
    fn validation() {
        assert!(TrainConfig::from_json(r#"{"kd_lambda": -1}"#).is_err());
        assert!(TrainConfig::from_json(r#"{"epochs": 5, "kd_start_epoch": 6, "kd_enabled": true}"#).is_err());
        assert!(TrainConfig::from_json(r#"{"system": "tsot", "kd_enabled": true}"#).is_err());
        assert!(TrainConfig::from_json(r#"{"system": "bogus"}"#).is_err());
        let full = TrainConfig::full_scale();
        assert_eq!((full.peak_lr, full.warmup_steps, full.epochs, full.batch_size), (1.5e-3, 25_000, 200, 256));
        assert!(full.validate().is_ok());
    }

    #[test]
    fn regimes_follow_system() {
        for (sys, k) in [(Regime::Single, 20), (Regime::Tsot, 21), (Regime::Aft, 22)] {
            let c = TrainConfig {
                system: sys,
                ..TrainConfig::toy()
            };
            let m = crate::model::Model::new(c.model_config()).unwrap();
            assert_eq!(m.vocab.size(), k);
        }
        let single = TrainConfig {
            system: Regime::Single,
            ..TrainConfig::toy()
        };
        assert_eq!(single.train_mix_config().two_speaker_prob, 0.0);
        assert_eq!(single.mix_config().two_speaker_prob, 0.5);
    }
}
