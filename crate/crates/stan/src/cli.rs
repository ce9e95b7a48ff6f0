//! Command-line surface. `main` parses [`Cli`] and calls [`run`].

use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use log::info;
use serde::Serialize;
use stan_core::model::export_attention;
use stan_core::relation::trajectory_relation;
use stan_core::synth::generate;
use stan_core::train::{evaluate, train_with, EvalReport, TrainConfig};
use stan_core::trajectory::Dataset;
use stan_core::Variant;

use crate::config::{parse_interval_mode, parse_k_list, parse_mask_mode, parse_variant, RunConfig};
use crate::ingest::{parse_checkins, FieldOrder};
use crate::report::{ablation_table, AblationRow};
use crate::run::RunDir;
use crate::{attention, checkpoint, dataset_file, report, synth_file, Error};

#[derive(Debug, Parser)]
#[command(name = "stan", version, about = "Spatiotemporal attention next-location recommender")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

/// Flags shared by every subcommand. Each one overrides the config file and
/// the matching `STAN_*` environment variable.
#[derive(Debug, Args, Default)]
pub struct Common {
    /// Key-value config file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Dataset file written by `ingest`.
    #[arg(long, global = true)]
    pub dataset: Option<PathBuf>,
    /// Output location: a file for `ingest`, a run root otherwise.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Ablation variant, e.g. STAN, -TIM, -ALL. `ablate` accepts a comma list.
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub variant: Option<String>,
    /// Recall cutoffs, e.g. 5,10.
    #[arg(long, global = true)]
    pub k: Option<String>,
    /// paper or presoftmax.
    #[arg(long, global = true)]
    pub mask_mode: Option<String>,
    /// unit or interpolation.
    #[arg(long, global = true)]
    pub interval_mode: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse raw check-ins into a dataset file and print its statistics.
    Ingest {
        raw: PathBuf,
        /// Field order, `default`, `tsmc`, or a list like user,venue,lat,lon,time.
        #[arg(long)]
        format: Option<String>,
    },
    /// Generate planted-routine check-ins in the raw format.
    Synth,
    /// Train a model and evaluate the best snapshot on test.
    Train,
    /// Evaluate a trained run on the dataset's test and validation splits.
    Eval {
        /// Run directory written by `train`.
        #[arg(long)]
        run: PathBuf,
    },
    /// Train every listed variant from the same seed.
    Ablate,
    /// Write the aggregation attention matrix of one user's test window.
    ExportAttention {
        #[arg(long)]
        run: PathBuf,
        /// 1-based user id; defaults to the config's `user`.
        #[arg(long)]
        user: Option<u32>,
    },
    /// Print dataset statistics and split sizes.
    Stats,
}

/// Config after the file, environment and flag layers.
pub fn resolve_config(common: &Common, env: impl Fn(&str) -> Option<String>) -> Result<RunConfig, Error> {
    let mut c = RunConfig::default();
    if let Some(p) = &common.config {
        c.apply_file(p)?;
    }
    c.apply_env(env)?;
    if let Some(s) = common.seed {
        c.set("seed", &s.to_string())?;
    }
    if let Some(k) = &common.k {
        c.train.eval_k = parse_k_list(k)?;
    }
    if let Some(m) = &common.mask_mode {
        c.train.model.mask_mode = parse_mask_mode(m)?;
    }
    if let Some(m) = &common.interval_mode {
        c.train.model.interval_mode = parse_interval_mode(m)?;
    }
    Ok(c)
}

fn require<'a>(p: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path, Error> {
    p.as_deref().ok_or_else(|| Error::Config(format!("--{flag} is required")))
}

fn out_root(common: &Common) -> PathBuf {
    common.out.clone().unwrap_or_else(|| PathBuf::from("runs"))
}

fn load(common: &Common, n: usize) -> Result<(crate::ingest::Ingested, Dataset), Error> {
    let path = require(&common.dataset, "dataset")?;
    let loaded = dataset_file::load(path)?;
    let ds = Dataset::build(loaded.stats.clone(), loaded.trajectories.clone(), n);
    Ok((loaded, ds))
}

fn json<T: Serialize>(v: &T) -> Vec<u8> {
    serde_json::to_vec_pretty(v).expect("artifacts serialize")
}

fn train_one(ds: &Dataset, cfg: &TrainConfig) -> Result<(stan_core::ModelParams, EvalReport), Error> {
    let start = Instant::now();
    let (params, mut report) = train_with(ds, cfg, |e, _| {
        info!(
            "epoch {} loss {:.4} val {}",
            e.epoch,
            e.mean_loss,
            e.val_recall.iter().map(|r| format!("R@{}={:.4}", r.k, r.recall)).collect::<Vec<_>>().join(" ")
        );
    })?;
    report.wall_clock_secs = start.elapsed().as_secs_f64();
    Ok((params, report))
}

fn epochs_csv(report: &EvalReport) -> String {
    let ks: Vec<usize> = report.config.eval_k.clone();
    let mut out = format!("epoch,mean_loss{}\n", ks.iter().map(|k| format!(",val_recall@{k}")).collect::<String>());
    for e in &report.epochs {
        out.push_str(&format!("{},{:.16e}", e.epoch, e.mean_loss));
        for r in &e.val_recall {
            out.push_str(&format!(",{:.16e}", r.recall));
        }
        out.push('\n');
    }
    out
}

/// Execute one command; returns the text printed on success.
pub fn run(cli: &Cli, env: impl Fn(&str) -> Option<String>) -> Result<String, Error> {
    let common = &cli.common;
    let mut cfg = resolve_config(common, env)?;
    if let Some(v) = &common.variant {
        if !matches!(cli.command, Command::Ablate) {
            cfg.variant = Some(parse_variant(v)?);
        }
    }
    match &cli.command {
        Command::Ingest { raw, format } => {
            let format_text = format.clone().unwrap_or_else(|| cfg.format.clone());
            let order: FieldOrder = format_text.parse()?;
            let out = require(&common.out, "out")?;
            let file = fs::File::open(raw).map_err(|e| Error::io(raw, e))?;
            let data = parse_checkins(BufReader::new(file), &order)?;
            dataset_file::save(&data, out)?;
            let s = &data.stats;
            Ok(format!(
                "users {}\nlocations {}\ncheckins {}\nskipped {}\nwrote {}\n",
                s.num_users,
                s.num_locations,
                s.num_checkins,
                data.skipped.total() - data.skipped.blank,
                out.display()
            ))
        }
        Command::Synth => {
            let data = generate(&cfg.synth)?;
            let run = RunDir::create(&out_root(common), cfg.synth.seed)?;
            let mut text = Vec::new();
            synth_file::write_checkins(&data, &mut text)?;
            let path = run.write("checkins.txt", &text)?;
            run.write("synth.json", synth_file::describe(&data).as_bytes())?;
            run.write("config.txt", cfg.to_text().as_bytes())?;
            let dir = run.finish()?;
            Ok(format!(
                "users {}\nlocations {}\ncheckins {}\nwrote {}\nrun {}\n",
                data.trajectories.len(),
                data.layout.locations.len(),
                data.num_checkins(),
                path.display(),
                dir.display()
            ))
        }
        Command::Train => {
            let tc = cfg.effective_train();
            let (_, ds) = load(common, tc.model.n)?;
            let run = RunDir::create(&out_root(common), tc.seed)?;
            run.write("config.txt", cfg.to_text().as_bytes())?;
            let (params, report) = train_one(&ds, &tc)?;
            run.write("checkpoint.stan", &checkpoint::to_bytes(&params))?;
            run.write("report.json", report::to_json(&report).as_bytes())?;
            let table = report::table(&report);
            run.write("report.txt", table.as_bytes())?;
            run.write("epochs.csv", epochs_csv(&report).as_bytes())?;
            let dir = run.finish()?;
            Ok(format!("{table}run {}\n", dir.display()))
        }
        Command::Eval { run: trained } => {
            let mut tcfg = RunConfig::default();
            tcfg.apply_file(&trained.join("config.txt"))?;
            if let Some(k) = &common.k {
                tcfg.train.eval_k = parse_k_list(k)?;
            }
            let tc = tcfg.effective_train();
            let params = checkpoint::load(&trained.join("checkpoint.stan"))?;
            let (_, ds) = load(common, tc.model.n)?;
            let start = Instant::now();
            let recall = evaluate(&params, &tc.model, &ds, &ds.test, &tc.eval_k)?;
            let val_recall = evaluate(&params, &tc.model, &ds, &ds.val, &tc.eval_k)?;
            let report = EvalReport {
                seed: tc.seed,
                config: tc.clone(),
                recall,
                val_recall,
                best_epoch: 0,
                epochs: Vec::new(),
                score_gradients_per_step: 0.0,
                train_examples: ds.train.len(),
                wall_clock_secs: start.elapsed().as_secs_f64(),
            };
            let run = RunDir::create(&out_root(common), tc.seed)?;
            run.write("config.txt", tcfg.to_text().as_bytes())?;
            run.write("source.txt", format!("{}\n", trained.display()).as_bytes())?;
            run.write("eval.json", report::to_json(&report).as_bytes())?;
            let table = report::table(&report);
            run.write("eval.txt", table.as_bytes())?;
            let dir = run.finish()?;
            Ok(format!("{table}run {}\n", dir.display()))
        }
        Command::Ablate => {
            let variants: Vec<Variant> = match &common.variant {
                Some(list) => list.split(',').map(|v| parse_variant(v.trim())).collect::<Result<_, _>>()?,
                None => Variant::ALL.to_vec(),
            };
            let (_, ds) = load(common, cfg.train.model.n)?;
            let run = RunDir::create(&out_root(common), cfg.train.seed)?;
            run.write("config.txt", cfg.to_text().as_bytes())?;
            let mut rows = Vec::new();
            for v in variants {
                info!("variant {}", v.name());
                let (_, report) = train_one(&ds, &v.apply(&cfg.train))?;
                rows.push(AblationRow { variant: v, name: v.name().to_string(), report });
            }
            run.write("ablation.json", &json(&rows))?;
            let table = ablation_table(&rows);
            run.write("ablation.txt", table.as_bytes())?;
            let dir = run.finish()?;
            Ok(format!("{table}run {}\n", dir.display()))
        }
        Command::ExportAttention { run: trained, user } => {
            let mut tcfg = RunConfig::default();
            tcfg.apply_file(&trained.join("config.txt"))?;
            let user = user.unwrap_or(cfg.user);
            let tc = tcfg.effective_train();
            let params = checkpoint::load(&trained.join("checkpoint.stan"))?;
            let (loaded, ds) = load(common, tc.model.n)?;
            let ex = ds
                .test
                .iter()
                .find(|e| e.user + 1 == user as usize)
                .copied()
                .ok_or_else(|| Error::Input(format!("user {user} has no test window")))?;
            let seq = ds.materialize(ex);
            let cor = export_attention(&params, &tc.model, &seq, &trajectory_relation(&seq))?;
            let n = seq.n();
            let run = RunDir::create(&out_root(common), tc.seed)?;
            let mut csv = Vec::new();
            attention::write_csv(&cor, n, &mut csv)?;
            run.write("attention.csv", &csv)?;
            let user_key = loaded.user_keys.get(user as usize - 1).cloned().unwrap_or_default();
            let sidecar = attention::Sidecar::new(&seq, &user_key, &loaded.venue_keys, tcfg.to_text());
            run.write("attention.json", &json(&sidecar))?;
            let mut img = Vec::new();
            attention::write_png(&cor, n, 8, &mut img)?;
            run.write("attention.png", &img)?;
            let dir = run.finish()?;
            Ok(format!("n {n}\nvalid {}\nrun {}\n", seq.valid_len, dir.display()))
        }
        Command::Stats => {
            let (loaded, ds) = load(common, cfg.train.model.n)?;
            let s = &loaded.stats;
            Ok(format!(
                "users {}\nlocations {}\ncheckins {}\ndropped users {}\ntrain {}\nval {}\ntest {}\n",
                s.num_users,
                s.num_locations,
                s.num_checkins,
                ds.dropped_users,
                ds.train.len(),
                ds.val.len(),
                ds.test.len()
            ))
        }
    }
}
