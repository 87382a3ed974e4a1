//! Epoch loop: on-the-fly sampling, batched gradient accumulation with a
//! fixed reduction order, AdamW updates, dev scoring and checkpoints.

use super::config::TrainConfig;
use super::loss::system_loss;
use super::pipeline::evaluate_model;
use crate::error::{MtlabError, Result};
use crate::labels::Regime;
use crate::model::Model;
use crate::numerics::{clip_grad_norm, AdamW, Checkpoint, Gradients, StepOutcome};
use crate::simdata::{augment, Corpus, MixtureSample, Split};
use crate::transducer::LossReport;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

const AUGMENT_SALT: u64 = 0x6175_676d;

/// One line of the metrics log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub step: u64,
    /// Mean per-sample combined loss.
    pub loss: f64,
    pub rnnt: f64,
    pub kd: f64,
    pub kd_lambda: f64,
    pub lr: f64,
    pub skipped_steps: u64,
    pub cpwer_dev_1spk: Option<f64>,
    pub cpwer_dev_2spk: Option<f64>,
    pub seconds: f64,
}

pub struct Trainer {
    pub config: TrainConfig,
    corpus: Corpus,
    train_corpus: Corpus,
    dev: Vec<MixtureSample>,
    model: Model,
    opt: AdamW,
    epoch: usize,
    best: Option<(f64, usize, Model)>,
    history: Vec<EpochRecord>,
    out_dir: Option<PathBuf>,
    pool: Option<rayon::ThreadPool>,
}

impl Trainer {
    pub fn new(config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let model = Model::new(config.model_config())?;
        let opt = AdamW::new(config.adamw_config(), &model.store);
        let corpus = Corpus::new(config.synth_spec(), config.mix_config())?;
        let train_corpus = Corpus::new(config.synth_spec(), config.train_mix_config())?;
        let dev = corpus.samples(config.data_seed, Split::Dev, 0, config.dev_samples)?;
        let pool = (config.workers > 1)
            .then(|| {
                rayon::ThreadPoolBuilder::new()
                    .num_threads(config.workers)
                    .build()
                    .map_err(|e| MtlabError::Config(format!("worker pool: {e}")))
            })
            .transpose()?;
        Ok(Self {
            config,
            corpus,
            train_corpus,
            dev,
            model,
            opt,
            epoch: 0,
            best: None,
            history: Vec::new(),
            out_dir: None,
            pool,
        })
    }

    /// Write `metrics.jsonl`, `last.ckpt` and `best.ckpt` under `dir`. The
    /// metrics file is rewritten from the current history, so a rerun or a
    /// resumed run never duplicates lines.
    pub fn with_output(mut self, dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        let mut f = std::fs::File::create(dir.join("metrics.jsonl"))?;
        for r in &self.history {
            serde_json::to_writer(&mut f, r)?;
            f.write_all(b"\n")?;
        }
        self.out_dir = Some(dir.to_path_buf());
        Ok(self)
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn history(&self) -> &[EpochRecord] {
        &self.history
    }

    pub fn corpus(&self) -> &Corpus {
        &self.corpus
    }

    /// Best model on the dev set so far, or the current one if no epoch
    /// has been scored.
    pub fn best_model(&self) -> &Model {
        self.best.as_ref().map_or(&self.model, |(_, _, m)| m)
    }

    pub fn best_epoch(&self) -> Option<usize> {
        self.best.as_ref().map(|(_, e, _)| *e)
    }

    /// Continue from this trainer's exact state under a different config,
    /// e.g. to switch distillation on. Everything that shapes the model or
    /// the data must match. Dev-best tracking restarts.
    pub fn fork(&self, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let same = TrainConfig {
            kd_enabled: self.config.kd_enabled,
            kd_lambda: self.config.kd_lambda,
            kd_start_epoch: self.config.kd_start_epoch,
            epochs: self.config.epochs,
            workers: self.config.workers,
            ..config.clone()
        };
        if same != self.config {
            return Err(MtlabError::Config(
                "fork may only change kd_*, epochs and workers".into(),
            ));
        }
        let mut t = Self::new(config)?;
        t.model = self.model.clone();
        t.opt = self.opt.clone();
        t.epoch = self.epoch;
        t.history = self.history.clone();
        Ok(t)
    }

    fn sample_for_step(&self, index: u64) -> Result<MixtureSample> {
        let mut s = self.train_corpus.sample(self.config.seed, Split::Train, index)?;
        let mut rng = Corpus::rng_for(self.config.seed ^ AUGMENT_SALT, Split::Train, index);
        s.mixture = augment(&s.mixture, &mut rng, &self.config.augment_config());
        Ok(s)
    }

    fn batch_gradients(&self, samples: &[MixtureSample], kd: Option<f64>) -> Result<Vec<(LossReport, Gradients)>> {
        let one = |s: &MixtureSample| -> Result<(LossReport, Gradients)> {
            let mut g = self.model.store.zero_gradients();
            let r = system_loss(&self.model, s, kd, Some(&mut g))?;
            Ok((r, g))
        };
        match &self.pool {
            Some(pool) => pool.install(|| samples.par_iter().map(one).collect()),
            None => samples.iter().map(one).collect(),
        }
    }

    fn dump_non_finite(&self, sample: &MixtureSample, report: &LossReport) {
        log::error!("non-finite loss on sample {}: {:?}", sample.id, report);
        if let Some(dir) = &self.out_dir {
            let body = serde_json::json!({
                "sample": sample.id,
                "epoch": self.epoch,
                "step": self.opt.step,
                "report": report,
                "tokens": sample.references(),
                "delay_frames": sample.delay_frames,
            });
            let _ = std::fs::write(dir.join("non_finite_sample.json"), body.to_string());
        }
    }

    pub fn train_epoch(&mut self) -> Result<EpochRecord> {
        let started = Instant::now();
        let kd = self.config.kd_active(self.epoch).then_some(self.config.kd_lambda);
        let spe = self.config.samples_per_epoch;
        let base = (self.epoch * spe) as u64;
        let (mut loss, mut rnnt, mut kd_sum) = (0.0, 0.0, 0.0);
        let mut lr = 0.0;
        for chunk_start in (0..spe).step_by(self.config.batch_size) {
            let end = (chunk_start + self.config.batch_size).min(spe);
            let samples = (chunk_start..end)
                .map(|i| self.sample_for_step(base + i as u64))
                .collect::<Result<Vec<_>>>()?;
            let results = self.batch_gradients(&samples, kd)?;
            let mut total = self.model.store.zero_gradients();
            for (s, (r, g)) in samples.iter().zip(&results) {
                if !r.combined.is_finite() {
                    self.dump_non_finite(s, r);
                    return Err(MtlabError::NonFinite(format!(
                        "loss on sample {} at epoch {}",
                        s.id, self.epoch
                    )));
                }
                loss += r.combined;
                rnnt += r.rnnt;
                kd_sum += r.kd;
                total.add_assign(g);
            }
            total.scale(1.0 / samples.len() as f64);
            self.model.store.zero_grads();
            self.model.store.accumulate(&total);
            if self.config.clip_norm > 0.0 {
                clip_grad_norm(&mut self.model.store, self.config.clip_norm);
            }
            if let StepOutcome::Applied { lr: l } = self.opt.step(&mut self.model.store, &self.config.schedule()) {
                lr = l;
            }
        }
        let eval = evaluate_model(&self.model, &self.dev)?;
        let n = spe as f64;
        let record = EpochRecord {
            epoch: self.epoch,
            step: self.opt.step,
            loss: loss / n,
            rnnt: rnnt / n,
            kd: kd_sum / n,
            kd_lambda: kd.unwrap_or(0.0),
            lr,
            skipped_steps: self.opt.skipped,
            cpwer_dev_1spk: eval.one_spk.cpwer(),
            cpwer_dev_2spk: eval.two_spk.cpwer(),
            seconds: started.elapsed().as_secs_f64(),
        };
        // The single-talker system is selected on the condition it models.
        let selector = match self.config.system {
            Regime::Single => eval.one_spk.cpwer(),
            _ => eval.overall().cpwer(),
        }
        .unwrap_or(f64::INFINITY);
        if self.best.as_ref().is_none_or(|(b, _, _)| selector < *b) {
            self.best = Some((selector, self.epoch, self.model.clone()));
            if let Some(dir) = &self.out_dir {
                self.model.to_checkpoint().save(&dir.join("best.ckpt"))?;
            }
        }
        log::info!(
            "epoch {} loss {:.4} (rnnt {:.4} kd {:.4}) dev cpWER 1spk {:?} 2spk {:?} [{:.1}s]",
            record.epoch,
            record.loss,
            record.rnnt,
            record.kd,
            record.cpwer_dev_1spk,
            record.cpwer_dev_2spk,
            record.seconds
        );
        self.epoch += 1;
        self.history.push(record.clone());
        if let Some(dir) = &self.out_dir {
            let mut f = OpenOptions::new().create(true).append(true).open(dir.join("metrics.jsonl"))?;
            serde_json::to_writer(&mut f, &record)?;
            f.write_all(b"\n")?;
            self.state_checkpoint().save(&dir.join("last.ckpt"))?;
        }
        Ok(record)
    }

    /// Train until `epoch` epochs have completed (or the configured total).
    pub fn run_to(&mut self, epoch: usize) -> Result<()> {
        while self.epoch < epoch.min(self.config.epochs) {
            self.train_epoch()?;
        }
        Ok(())
    }

    pub fn run(&mut self) -> Result<()> {
        self.run_to(self.config.epochs)
    }

    /// Everything needed to continue bit-exactly: parameters, optimizer
    /// moments and counters, the dev-best model and the history.
    pub fn state_checkpoint(&self) -> Checkpoint {
        let mut ck = self.model.to_checkpoint();
        ck.set_meta("kind", "train-state");
        ck.set_meta("epoch", self.epoch);
        ck.set_meta("opt_step", self.opt.step);
        ck.set_meta("opt_skipped", self.opt.skipped);
        ck.set_meta("config", serde_json::to_string(&self.config).expect("config serializes"));
        ck.set_meta("history", serde_json::to_string(&self.history).expect("history serializes"));
        for ((p, m), v) in self.model.store.iter().zip(&self.opt.m).zip(&self.opt.v) {
            ck.push_array(format!("adam.m/{}", p.name), m.clone());
            ck.push_array(format!("adam.v/{}", p.name), v.clone());
        }
        if let Some((score, epoch, best)) = &self.best {
            ck.set_meta("best_score", score);
            ck.set_meta("best_epoch", epoch);
            for p in best.store.iter() {
                ck.push_array(format!("best/{}", p.name), p.value.clone());
            }
        }
        ck
    }

    /// Rebuild a trainer from [`Trainer::state_checkpoint`] output.
    pub fn resume(config: TrainConfig, ck: &Checkpoint) -> Result<Self> {
        if ck.meta("kind") != Some("train-state") {
            return Err(MtlabError::Checkpoint("not a training-state checkpoint".into()));
        }
        let saved: TrainConfig = serde_json::from_str(
            ck.meta("config").ok_or_else(|| MtlabError::Checkpoint("missing config".into()))?,
        )?;
        let mut t = Self::new(saved)?.fork(config)?;
        t.model.load_params(ck)?;
        t.epoch = ck.meta_parse("epoch")?;
        t.opt.step = ck.meta_parse("opt_step")?;
        t.opt.skipped = ck.meta_parse("opt_skipped")?;
        t.history = serde_json::from_str(ck.meta("history").unwrap_or("[]"))?;
        let names: Vec<String> = t.model.store.iter().map(|p| p.name.clone()).collect();
        for (i, name) in names.iter().enumerate() {
            let get = |prefix: &str| {
                ck.array(&format!("{prefix}/{name}"))
                    .cloned()
                    .ok_or_else(|| MtlabError::Checkpoint(format!("missing {prefix}/{name}")))
            };
            t.opt.m[i] = get("adam.m")?;
            t.opt.v[i] = get("adam.v")?;
        }
        if ck.meta("best_epoch").is_some() {
            let mut best = t.model.clone();
            for p in best.store.iter_mut() {
                p.value = ck
                    .array(&format!("best/{}", p.name))
                    .cloned()
                    .ok_or_else(|| MtlabError::Checkpoint(format!("missing best/{}", p.name)))?;
            }
            t.best = Some((ck.meta_parse("best_score")?, ck.meta_parse("best_epoch")?, best));
        }
        Ok(t)
    }
}
