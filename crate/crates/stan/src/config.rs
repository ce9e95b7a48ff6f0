//! Run configuration: a `key = value` file, `STAN_*` environment overrides,
//! then command-line flags, each layer replacing the one before.
//!
//! ```text
//! # comments start with '#'
//! seed = 3
//! epochs = 20
//! d = 16
//! interval_mode = unit
//! synth.noise_rate = 0.2
//! ```
//!
//! Environment variables use the key upper-cased with `.` replaced by `_`,
//! e.g. `STAN_SYNTH_NOISE_RATE`. Unknown keys are rejected.

use std::fmt::Display;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use stan_core::synth::SynthConfig;
use stan_core::train::TrainConfig;
use stan_core::{IntervalMode, MaskMode, Variant};

use crate::ingest::FieldOrder;
use crate::Error;

pub const ENV_PREFIX: &str = "STAN_";

pub const KEYS: [&str; 33] = [
    "seed",
    "epochs",
    "lr",
    "beta1",
    "beta2",
    "eps",
    "neg_samples",
    "balanced_sampler",
    "batch_size",
    "eval_k",
    "n",
    "d",
    "dropout",
    "interval_mode",
    "mask_mode",
    "use_tim",
    "use_sim",
    "use_candidate_intervals",
    "variant",
    "format",
    "synth.num_users",
    "synth.weeks",
    "synth.homes",
    "synth.works",
    "synth.near_mall",
    "synth.noise_locations",
    "synth.friday_fixed_prob",
    "synth.saturday_mall_prob",
    "synth.noise_rate",
    "synth.jitter_hm",
    "synth.cluster_separation_km",
    "synth.start",
    "user",
];

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub synth: SynthConfig,
    /// Ablation applied on top of the flags above, if any.
    pub variant: Option<Variant>,
    pub format: String,
    /// User whose test window `export-attention` draws.
    pub user: u32,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            synth: SynthConfig::default(),
            variant: None,
            format: FieldOrder::DEFAULT.to_string(),
            user: 1,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, Error> {
    value.parse().map_err(|_| Error::Config(format!("{key}: cannot parse {value:?}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool, Error> {
    match value {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected true or false, got {value:?}"))),
    }
}

pub fn parse_interval_mode(value: &str) -> Result<IntervalMode, Error> {
    match value {
        "unit" => Ok(IntervalMode::Unit),
        "interpolation" => Ok(IntervalMode::Interpolation),
        _ => Err(Error::Config(format!("interval_mode: expected unit or interpolation, got {value:?}"))),
    }
}

pub fn parse_mask_mode(value: &str) -> Result<MaskMode, Error> {
    match value {
        "paper" => Ok(MaskMode::Paper),
        "presoftmax" => Ok(MaskMode::Presoftmax),
        _ => Err(Error::Config(format!("mask_mode: expected paper or presoftmax, got {value:?}"))),
    }
}

pub fn parse_variant(value: &str) -> Result<Variant, Error> {
    Variant::parse(value).ok_or_else(|| Error::Config(format!("unknown variant {value:?}")))
}

pub fn parse_k_list(value: &str) -> Result<Vec<usize>, Error> {
    value
        .split(',')
        .map(|s| parse::<usize>("k", s.trim()))
        .collect::<Result<Vec<_>, _>>()
        .and_then(|ks| {
            if ks.is_empty() || ks.contains(&0) {
                Err(Error::Config(format!("k: expected positive cutoffs, got {value:?}")))
            } else {
                Ok(ks)
            }
        })
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), Error> {
        let value = value.trim();
        let t = &mut self.train;
        let s = &mut self.synth;
        match key {
            "seed" => {
                t.seed = parse(key, value)?;
                s.seed = t.seed;
            }
            "epochs" => t.epochs = parse(key, value)?,
            "lr" => t.adam.lr = parse(key, value)?,
            "beta1" => t.adam.beta1 = parse(key, value)?,
            "beta2" => t.adam.beta2 = parse(key, value)?,
            "eps" => t.adam.eps = parse(key, value)?,
            "neg_samples" => t.neg_samples = parse(key, value)?,
            "balanced_sampler" => t.balanced_sampler = parse_bool(key, value)?,
            "batch_size" => t.batch_size = parse(key, value)?,
            "eval_k" => t.eval_k = parse_k_list(value)?,
            "n" => t.model.n = parse(key, value)?,
            "d" => t.model.d = parse(key, value)?,
            "dropout" => t.model.dropout = parse(key, value)?,
            "interval_mode" => t.model.interval_mode = parse_interval_mode(value)?,
            "mask_mode" => t.model.mask_mode = parse_mask_mode(value)?,
            "use_tim" => t.model.use_tim = parse_bool(key, value)?,
            "use_sim" => t.model.use_sim = parse_bool(key, value)?,
            "use_candidate_intervals" => t.model.use_candidate_intervals = parse_bool(key, value)?,
            "variant" => self.variant = Some(parse_variant(value)?),
            "format" => {
                value.parse::<FieldOrder>()?;
                self.format = value.to_string();
            }
            "synth.num_users" => s.num_users = parse(key, value)?,
            "synth.weeks" => s.weeks = parse(key, value)?,
            "synth.homes" => s.homes = parse(key, value)?,
            "synth.works" => s.works = parse(key, value)?,
            "synth.near_mall" => s.near_mall = parse(key, value)?,
            "synth.noise_locations" => s.noise_locations = parse(key, value)?,
            "synth.friday_fixed_prob" => s.friday_fixed_prob = parse(key, value)?,
            "synth.saturday_mall_prob" => s.saturday_mall_prob = parse(key, value)?,
            "synth.noise_rate" => s.noise_rate = parse(key, value)?,
            "synth.jitter_hm" => s.jitter_hm = parse(key, value)?,
            "synth.cluster_separation_km" => s.cluster_separation_km = parse(key, value)?,
            "synth.start" => s.start = parse(key, value)?,
            "user" => self.user = parse(key, value)?,
            _ => return Err(Error::Config(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    pub fn apply_text(&mut self, text: &str) -> Result<(), Error> {
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("config line {}: expected key = value", i + 1)))?;
            self.set(key.trim(), value)?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<(), Error> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        self.apply_text(&text)
    }

    pub fn env_name(key: &str) -> String {
        format!("{ENV_PREFIX}{}", key.replace('.', "_").to_ascii_uppercase())
    }

    /// Apply overrides from `lookup`, which maps an environment variable
    /// name to its value.
    pub fn apply_env(&mut self, lookup: impl Fn(&str) -> Option<String>) -> Result<(), Error> {
        for key in KEYS {
            if let Some(v) = lookup(&Self::env_name(key)) {
                self.set(key, &v)?;
            }
        }
        Ok(())
    }

    /// Training config with the variant, if any, applied.
    pub fn effective_train(&self) -> TrainConfig {
        match self.variant {
            Some(v) => v.apply(&self.train),
            None => self.train.clone(),
        }
    }

    /// Every key with its current value, in the file syntax.
    pub fn to_text(&self) -> String {
        fn line(out: &mut String, k: &str, v: impl Display) {
            out.push_str(&format!("{k} = {v}\n"));
        }
        let mut out = String::new();
        let t = &self.train;
        let s = &self.synth;
        let mode = |m: IntervalMode| if m == IntervalMode::Unit { "unit" } else { "interpolation" };
        let mask = |m: MaskMode| if m == MaskMode::Paper { "paper" } else { "presoftmax" };
        line(&mut out, "seed", t.seed);
        line(&mut out, "epochs", t.epochs);
        line(&mut out, "lr", t.adam.lr);
        line(&mut out, "beta1", t.adam.beta1);
        line(&mut out, "beta2", t.adam.beta2);
        line(&mut out, "eps", t.adam.eps);
        line(&mut out, "neg_samples", t.neg_samples);
        line(&mut out, "balanced_sampler", t.balanced_sampler);
        line(&mut out, "batch_size", t.batch_size);
        line(&mut out, "eval_k", t.eval_k.iter().map(|k| k.to_string()).collect::<Vec<_>>().join(","));
        line(&mut out, "n", t.model.n);
        line(&mut out, "d", t.model.d);
        line(&mut out, "dropout", t.model.dropout);
        line(&mut out, "interval_mode", mode(t.model.interval_mode));
        line(&mut out, "mask_mode", mask(t.model.mask_mode));
        line(&mut out, "use_tim", t.model.use_tim);
        line(&mut out, "use_sim", t.model.use_sim);
        line(&mut out, "use_candidate_intervals", t.model.use_candidate_intervals);
        if let Some(v) = self.variant {
            line(&mut out, "variant", v.name());
        }
        line(&mut out, "format", &self.format);
        line(&mut out, "synth.num_users", s.num_users);
        line(&mut out, "synth.weeks", s.weeks);
        line(&mut out, "synth.homes", s.homes);
        line(&mut out, "synth.works", s.works);
        line(&mut out, "synth.near_mall", s.near_mall);
        line(&mut out, "synth.noise_locations", s.noise_locations);
        line(&mut out, "synth.friday_fixed_prob", s.friday_fixed_prob);
        line(&mut out, "synth.saturday_mall_prob", s.saturday_mall_prob);
        line(&mut out, "synth.noise_rate", s.noise_rate);
        line(&mut out, "synth.jitter_hm", s.jitter_hm);
        line(&mut out, "synth.cluster_separation_km", s.cluster_separation_km);
        line(&mut out, "synth.start", s.start);
        line(&mut out, "user", self.user);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_values_and_unknown_keys() {
        let mut c = RunConfig::default();
        c.apply_text("# run\nseed = 9\nd=16 # small\ninterval_mode = unit\nsynth.noise_rate = 0.25\neval_k = 1,5\n").unwrap();
        assert_eq!(c.train.seed, 9);
        assert_eq!(c.synth.seed, 9);
        assert_eq!(c.train.model.d, 16);
        assert_eq!(c.train.model.interval_mode, IntervalMode::Unit);
        assert_eq!(c.synth.noise_rate, 0.25);
        assert_eq!(c.train.eval_k, vec![1, 5]);
        assert!(matches!(c.apply_text("colour = blue"), Err(Error::Config(_))));
        assert!(c.apply_text("d = many").is_err());
        assert!(c.apply_text("just words").is_err());
    }

    #[test]
    fn env_overrides() {
        let mut c = RunConfig::default();
        c.apply_env(|k| match k {
            "STAN_EPOCHS" => Some("3".into()),
            "STAN_SYNTH_WEEKS" => Some("7".into()),
            "STAN_MASK_MODE" => Some("presoftmax".into()),
            _ => None,
        })
        .unwrap();
        assert_eq!(c.train.epochs, 3);
        assert_eq!(c.synth.weeks, 7);
        assert_eq!(c.train.model.mask_mode, MaskMode::Presoftmax);
    }

    #[test]
    fn echoed_text_reloads_to_the_same_config() {
        let mut c = RunConfig::default();
        c.apply_text("seed = 4\nlr = 0.01\nvariant = -SIM\nuse_candidate_intervals = false\nformat = tsmc").unwrap();
        let mut back = RunConfig::default();
        back.apply_text(&c.to_text()).unwrap();
        assert_eq!(back, c);
        for key in KEYS {
            assert!(c.to_text().contains(&format!("{key} = ")) || key == "variant");
        }
    }
}
