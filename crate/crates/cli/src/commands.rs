use crate::{Cli, Command, Global};
use mtlab::checks::{cpwer_oracle, lattice_oracle, tsot_round_trip, CheckReport};
use mtlab::decode::{BigramLm, DecodeConfig, DecodeMode, DecodeRecord, Fusion};
use mtlab::eval::{render_table, EvalResult, Table};
use mtlab::labels::{Regime, TokenId};
use mtlab::model::{EncoderMode, Model};
use mtlab::numerics::{Checkpoint, GradCheckConfig, GradCheckReport};
use mtlab::simdata::{read_jsonl, write_jsonl, Corpus, DatasetRecord, MixtureSample, Split};
use mtlab::train::{beam_sweep, check_gradients, evaluate_with, TrainConfig, Trainer, SWEEP_BEAMS};
use mtlab::{MtlabError, Result};
use serde::Serialize;
use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

pub enum Outcome {
    Ok,
    /// The command ran but a check it performs did not pass.
    CheckFailed,
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    version: &'a str,
    seed: u64,
    data_seed: u64,
    config_hash: String,
    config: &'a TrainConfig,
    created_unix: u64,
}

fn load_config(g: &Global) -> Result<TrainConfig> {
    let mut c = match &g.config {
        Some(p) => TrainConfig::load(p)?,
        None => TrainConfig::toy(),
    };
    if let Some(s) = g.seed {
        c.seed = s;
    }
    if let Some(w) = g.workers {
        c.workers = w;
    }
    c.validate()?;
    Ok(c)
}

fn write_manifest(dir: &Path, command: &str, config: &TrainConfig) -> Result<()> {
    let m = Manifest {
        command,
        version: env!("CARGO_PKG_VERSION"),
        seed: config.seed,
        data_seed: config.data_seed,
        config_hash: config.fingerprint(),
        config,
        created_unix: std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map_or(0, |d| d.as_secs()),
    };
    std::fs::write(dir.join(format!("manifest-{command}.json")), serde_json::to_string_pretty(&m)?)?;
    Ok(())
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

/// Split `LABEL=PATH`; a bare path is labelled by its file stem.
fn labelled(arg: &str) -> (String, PathBuf) {
    match arg.split_once('=') {
        Some((l, p)) => (l.to_string(), PathBuf::from(p)),
        None => {
            let p = PathBuf::from(arg);
            let l = p.file_stem().map_or(arg.to_string(), |s| s.to_string_lossy().into_owned());
            (l, p)
        }
    }
}

fn load_data(path: &Path, config: &TrainConfig) -> Result<Vec<MixtureSample>> {
    let records = read_jsonl(BufReader::new(File::open(path)?))?;
    let corpus = Corpus::new(config.synth_spec(), config.mix_config())?;
    records.iter().map(|r| r.regenerate(&corpus)).collect()
}

fn load_model(path: &Path) -> Result<Model> {
    Model::from_checkpoint(&Checkpoint::load(path)?)
}

pub fn run(cli: &Cli) -> Result<Outcome> {
    let config = load_config(&cli.global)?;
    let out = &cli.global.out;
    std::fs::create_dir_all(out)?;
    let name = match &cli.command {
        Command::GenData { .. } => "gen-data",
        Command::Train { .. } => "train",
        Command::Decode { .. } => "decode",
        Command::Eval { .. } => "eval",
        Command::Gradcheck => "gradcheck",
        Command::OracleCheck { .. } => "oracle-check",
        Command::SweepBeam { .. } => "sweep-beam",
    };
    write_manifest(out, name, &config)?;
    match &cli.command {
        Command::GenData { split, count } => gen_data(&config, out, split, *count),
        Command::Train { resume } => train(config, out, *resume),
        Command::Decode {
            model,
            data,
            greedy,
            beam,
            lm_weight,
            ilm_weight,
            lm_sentences,
        } => {
            let dc = DecodeConfig {
                mode: if *greedy { DecodeMode::Greedy } else { DecodeMode::Beam },
                beam: if *greedy { 1 } else { *beam },
                lm_weight: *lm_weight,
                ilm_weight: *ilm_weight,
                ..DecodeConfig::default()
            };
            decode(&config, out, model, data, &dc, *lm_sentences)
        }
        Command::Eval { data, decode } => eval(out, data, decode),
        Command::Gradcheck => gradcheck(out),
        Command::OracleCheck { cases } => oracle_check(out, *cases),
        Command::SweepBeam { model, data } => sweep_beam(&config, out, model, data),
    }
}

fn gen_data(config: &TrainConfig, out: &Path, splits: &[crate::SplitArg], count: usize) -> Result<Outcome> {
    let corpus = Corpus::new(config.synth_spec(), config.mix_config())?;
    for &s in splits {
        let split: Split = s.into();
        // The training stream is keyed by the run seed, held-out sets by the
        // shared data seed.
        let seed = if split == Split::Train { config.seed } else { config.data_seed };
        let recs: Vec<DatasetRecord> = corpus
            .samples(seed, split, 0, count)?
            .iter()
            .map(|x| DatasetRecord::from_sample(x, &corpus, split, seed))
            .collect();
        let path = out.join(format!("{}.jsonl", split.name()));
        let mut w = BufWriter::new(File::create(&path)?);
        write_jsonl(&recs, &mut w)?;
        w.flush()?;
        log::info!("wrote {} samples to {}", recs.len(), path.display());
    }
    Ok(Outcome::Ok)
}

fn train(config: TrainConfig, out: &Path, resume: bool) -> Result<Outcome> {
    let last = out.join("last.ckpt");
    let trainer = if resume && last.exists() {
        Trainer::resume(config.clone(), &Checkpoint::load(&last)?)?
    } else {
        Trainer::new(config.clone())?
    };
    write_json(&out.join("config.json"), &config)?;
    let mut trainer = trainer.with_output(out)?;
    trainer.run()?;
    trainer.model().to_checkpoint().save(&out.join("final.ckpt"))?;
    if let Some(r) = trainer.history().last() {
        println!(
            "trained {} epochs ({} steps); last dev cpWER 1spk {} 2spk {}; best epoch {:?}",
            trainer.epoch(),
            r.step,
            fmt_opt(r.cpwer_dev_1spk),
            fmt_opt(r.cpwer_dev_2spk),
            trainer.best_epoch()
        );
    }
    Ok(Outcome::Ok)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or("—".into(), |x| format!("{x:.1}"))
}

fn decode(
    config: &TrainConfig,
    out: &Path,
    model_path: &Path,
    data: &Path,
    dc: &DecodeConfig,
    lm_sentences: usize,
) -> Result<Outcome> {
    dc.validate()?;
    let model = load_model(model_path)?;
    let samples = load_data(data, config)?;
    let lm = if dc.lm_weight > 0.0 || dc.ilm_weight > 0.0 {
        let corpus = Corpus::new(config.synth_spec(), config.mix_config())?;
        Some(BigramLm::train(&corpus.text_corpus(config.data_seed, lm_sentences), config.vocab_size)?)
    } else {
        None
    };
    let fusion = Fusion::new(lm.as_ref(), dc);
    let (res, records) = evaluate_with(&model, &samples, dc, &fusion)?;
    let path = out.join("decode.jsonl");
    let mut w = BufWriter::new(File::create(&path)?);
    mtlab::decode::write_decode_jsonl(&records, &mut w)?;
    w.flush()?;
    println!(
        "decoded {} samples to {}; cpWER 1spk {} 2spk {}",
        samples.len(),
        path.display(),
        fmt_opt(res.one_spk.cpwer()),
        fmt_opt(res.two_spk.cpwer())
    );
    Ok(Outcome::Ok)
}

fn read_decodes(path: &Path) -> Result<BTreeMap<String, Vec<Vec<TokenId>>>> {
    let text = std::fs::read_to_string(path)?;
    let mut by_id: BTreeMap<String, Vec<Vec<TokenId>>> = BTreeMap::new();
    for (n, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let r: DecodeRecord = serde_json::from_str(line)
            .map_err(|e| MtlabError::Parse(format!("{}:{}: {e}", path.display(), n + 1)))?;
        let slots = by_id.entry(r.id).or_default();
        if slots.len() <= r.slot {
            slots.resize(r.slot + 1, Vec::new());
        }
        slots[r.slot] = r.tokens;
    }
    Ok(by_id)
}

fn eval(out: &Path, data: &Path, decodes: &[String]) -> Result<Outcome> {
    let records = read_jsonl(BufReader::new(File::open(data)?))?;
    let mut table = Table::new("cpWER (%)", "System", &["1spk", "2spk", "overall"]);
    let mut results = BTreeMap::new();
    for arg in decodes {
        let (label, path) = labelled(arg);
        let hyps = read_decodes(&path)?;
        let mut res = EvalResult::default();
        for rec in &records {
            let refs: Vec<Vec<TokenId>> = rec.speakers.iter().map(|s| s.tokens.clone()).collect();
            let h = hyps
                .get(&rec.id)
                .ok_or_else(|| MtlabError::Parse(format!("{}: no decode for {}", path.display(), rec.id)))?;
            res.add(&rec.id, &refs, h)?;
        }
        table.push(&label, vec![res.one_spk.cpwer(), res.two_spk.cpwer(), res.overall().cpwer()]);
        results.insert(label, res);
    }
    table.footer.push(format!("{} utterances from {}.", records.len(), data.display()));
    table
        .footer
        .push("Single-stream decodes fill slot 1 and leave slot 2 empty; cpWER takes the better assignment.".into());
    let text = render_table(&table);
    print!("{text}");
    std::fs::write(out.join("eval.txt"), &text)?;
    write_json(&out.join("eval.json"), &serde_json::json!({ "table": table, "results": results }))?;
    Ok(Outcome::Ok)
}

/// Tiny models and samples small enough for exhaustive finite differences.
pub fn gradcheck_cases() -> Result<Vec<(String, GradCheckReport)>> {
    let spec = mtlab::simdata::SynthSpec {
        vocab_size: 5,
        feat_dim: 3,
        min_tokens: 1,
        max_tokens: 2,
        d_min: 1,
        d_max: 1,
        silence_frames: 1,
        noise_sigma: 0.1,
        pattern_seed: 3,
        successors: 2,
    };
    let corpus = Corpus::new(
        spec,
        mtlab::simdata::MixConfig {
            offset_frames: 1,
            two_speaker_prob: 0.5,
        },
    )?;
    let find = |n: usize| -> Result<MixtureSample> {
        for i in 0..1000 {
            let s = corpus.sample(9, Split::Test, i)?;
            if s.num_speakers() == n {
                return Ok(s);
            }
        }
        Err(MtlabError::Config(format!("no {n}-speaker sample found")))
    };
    let (one, two) = (find(1)?, find(2)?);
    let mut out = Vec::new();
    for mode in [EncoderMode::Offline, EncoderMode::Causal] {
        for (label, regime, sample, kd) in [
            ("single", Regime::Single, &one, None),
            ("tsot", Regime::Tsot, &two, None),
            ("aft", Regime::Aft, &two, None),
            ("aft+kd", Regime::Aft, &two, Some(0.5)),
        ] {
            let model = Model::new(mtlab::model::ModelConfig {
                base_vocab: 5,
                regime,
                feat_dim: 3,
                encoder_mode: mode,
                enc_layers: 1,
                enc_hidden: 3,
                pred_embed: 2,
                pred_hidden: 3,
                joint_dim: 4,
                init_seed: 5,
            })?;
            let report = check_gradients(&model, sample, kd, GradCheckConfig::default())?;
            out.push((format!("{label} ({mode})"), report));
        }
    }
    Ok(out)
}

fn gradcheck(out: &Path) -> Result<Outcome> {
    let cases = gradcheck_cases()?;
    let mut ok = true;
    for (label, r) in &cases {
        println!(
            "{} {label}: max rel err {:.2e} (tol {:.0e})",
            if r.passed { "PASS" } else { "FAIL" },
            r.max_rel_err,
            r.tol
        );
        ok &= r.passed;
    }
    let map: BTreeMap<_, _> = cases.into_iter().collect();
    write_json(&out.join("gradcheck.json"), &map)?;
    Ok(if ok { Outcome::Ok } else { Outcome::CheckFailed })
}

fn oracle_check(out: &Path, cases: usize) -> Result<Outcome> {
    let reports: Vec<CheckReport> = vec![
        lattice_oracle(cases, 1, 1e-10)?,
        cpwer_oracle(cases, 2)?,
        tsot_round_trip(cases.max(1000), 3)?,
    ];
    for r in &reports {
        println!(
            "{} {}: {} cases, {} failures, max err {:.2e} [{:.2}s]",
            if r.passed() { "PASS" } else { "FAIL" },
            r.name,
            r.cases,
            r.failures,
            r.max_abs_err,
            r.seconds
        );
    }
    write_json(&out.join("oracle-check.json"), &reports)?;
    Ok(if reports.iter().all(CheckReport::passed) {
        Outcome::Ok
    } else {
        Outcome::CheckFailed
    })
}

fn sweep_beam(config: &TrainConfig, out: &Path, models: &[String], data: &Path) -> Result<Outcome> {
    let samples = load_data(data, config)?;
    let cols: Vec<String> = SWEEP_BEAMS.iter().map(|b| b.to_string()).collect();
    let col_refs: Vec<&str> = cols.iter().map(String::as_str).collect();
    let mut table = Table::new("2spk cpWER (%) by beam size", "System", &col_refs);
    let mut points = BTreeMap::new();
    for arg in models {
        let (label, path) = labelled(arg);
        let model = load_model(&path)?;
        let sweep = beam_sweep(&model, &samples, &SWEEP_BEAMS)?;
        table.push(&label, sweep.iter().map(|p| p.cpwer_2spk).collect());
        points.insert(label, sweep);
    }
    let text = render_table(&table);
    print!("{text}");
    std::fs::write(out.join("sweep-beam.txt"), &text)?;
    write_json(&out.join("sweep-beam.json"), &serde_json::json!({ "table": table, "points": points }))?;
    Ok(Outcome::Ok)
}
