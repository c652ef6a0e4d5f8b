//! Flat `key=value` configuration merged with command-line flags.
//!
//! Precedence: flag > config file > `NC_CORESET_SEED` (seed only) > default.
//! Keys use underscores; dashes in config-file keys are accepted.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::Args;

use crate::CliError;

pub const SEED_ENV: &str = "NC_CORESET_SEED";

/// Flags shared by every subcommand. Each one overrides the config-file key
/// of the same name.
#[derive(Debug, Clone, Default, Args)]
pub struct Flags {
    /// Input file (repeatable for `merge` and `sample-random`)
    #[arg(long)]
    pub input: Vec<PathBuf>,
    /// Score CSV (`sample_id,label,score`)
    #[arg(long)]
    pub scores: Option<PathBuf>,
    /// Output directory
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Sampling rule: threshold | top-fraction | top-count
    #[arg(long)]
    pub rule: Option<String>,
    /// Rule parameter (distance, fraction or count); sample count for `sample-random`
    #[arg(long)]
    pub value: Option<String>,
    /// Largest cluster count tried for the fake class
    #[arg(long = "k-max")]
    pub k_max: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// exclude | merged
    #[arg(long = "overlap-mode")]
    pub overlap_mode: Option<String>,
    /// real | fake
    #[arg(long)]
    pub class: Option<String>,
    /// key=value configuration file
    #[arg(long)]
    pub config: Option<PathBuf>,

    /// Held-out table to score (`train-toy`, `pipeline`)
    #[arg(long = "eval-input")]
    pub eval_input: Option<PathBuf>,
    /// Restrict training to the ids of this manifest (`train-toy`)
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Learning rate; `auto` picks a step below 1/L
    #[arg(long)]
    pub lr: Option<String>,
    /// Real-class rule for `pipeline`
    #[arg(long = "real-rule")]
    pub real_rule: Option<String>,
    #[arg(long = "real-value")]
    pub real_value: Option<String>,
    /// Decision threshold on scores for `interest`
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long)]
    pub dimension: Option<usize>,
    #[arg(long = "n-real")]
    pub n_real: Option<usize>,
    #[arg(long = "n-fake")]
    pub n_fake: Option<usize>,
    #[arg(long = "fake-modes")]
    pub fake_modes: Option<usize>,
    #[arg(long = "mode-separation")]
    pub mode_separation: Option<f64>,
    #[arg(long = "within-std")]
    pub within_std: Option<f64>,
}

/// The effective configuration of one invocation. Values are kept as the
/// strings they were given in, which is also how reports record them.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Config {
    values: BTreeMap<String, String>,
}

fn path_str(p: &Path) -> String {
    p.to_string_lossy().into_owned()
}

pub fn parse_config_text(text: &str) -> Result<BTreeMap<String, String>, CliError> {
    let mut values = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("config line {}: expected key=value", n + 1)))?;
        let key = key.trim().replace('-', "_");
        if key.is_empty() {
            return Err(CliError::Usage(format!("config line {}: empty key", n + 1)));
        }
        values.insert(key, value.trim().to_string());
    }
    Ok(values)
}

impl Config {
    pub fn resolve(flags: &Flags) -> Result<Config, CliError> {
        let mut values = match &flags.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
                parse_config_text(&text)?
            }
            None => BTreeMap::new(),
        };
        if !values.contains_key("seed") && flags.seed.is_none() {
            if let Ok(seed) = std::env::var(SEED_ENV) {
                values.insert("seed".into(), seed.trim().to_string());
            }
        }

        let mut set = |key: &str, value: Option<String>| {
            if let Some(v) = value {
                values.insert(key.to_string(), v);
            }
        };
        if !flags.input.is_empty() {
            let joined = flags.input.iter().map(|p| path_str(p)).collect::<Vec<_>>().join(",");
            set("input", Some(joined));
        }
        set("scores", flags.scores.as_deref().map(path_str));
        set("out", flags.out.as_deref().map(path_str));
        set("rule", flags.rule.clone());
        set("value", flags.value.clone());
        set("k_max", flags.k_max.map(|v| v.to_string()));
        set("seed", flags.seed.map(|v| v.to_string()));
        set("overlap_mode", flags.overlap_mode.clone());
        set("class", flags.class.clone());
        set("eval_input", flags.eval_input.as_deref().map(path_str));
        set("manifest", flags.manifest.as_deref().map(path_str));
        set("epochs", flags.epochs.map(|v| v.to_string()));
        set("lr", flags.lr.clone());
        set("real_rule", flags.real_rule.clone());
        set("real_value", flags.real_value.clone());
        set("threshold", flags.threshold.map(|v| v.to_string()));
        set("dimension", flags.dimension.map(|v| v.to_string()));
        set("n_real", flags.n_real.map(|v| v.to_string()));
        set("n_fake", flags.n_fake.map(|v| v.to_string()));
        set("fake_modes", flags.fake_modes.map(|v| v.to_string()));
        set("mode_separation", flags.mode_separation.map(|v| v.to_string()));
        set("within_std", flags.within_std.map(|v| v.to_string()));
        Ok(Config { values })
    }

    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> Config {
        Config {
            values: pairs.into_iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
        }
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.values.insert(key.to_string(), value.into());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn require(&self, key: &str) -> Result<&str, CliError> {
        self.get(key)
            .ok_or_else(|| CliError::Usage(format!("missing required setting `{key}` (flag --{})", key.replace('_', "-"))))
    }

    pub fn parse<T: FromStr>(&self, key: &str) -> Result<Option<T>, CliError> {
        self.get(key)
            .map(|raw| {
                raw.parse::<T>()
                    .map_err(|_| CliError::Usage(format!("invalid value `{raw}` for `{key}`")))
            })
            .transpose()
    }

    pub fn parse_or<T: FromStr>(&self, key: &str, default: T) -> Result<T, CliError> {
        Ok(self.parse(key)?.unwrap_or(default))
    }

    pub fn path(&self, key: &str) -> Result<PathBuf, CliError> {
        self.require(key).map(PathBuf::from)
    }

    pub fn paths(&self, key: &str) -> Result<Vec<PathBuf>, CliError> {
        Ok(self.require(key)?.split(',').map(PathBuf::from).collect())
    }

    /// Seed with the fallback chain applied; records the default when used.
    pub fn seed(&mut self) -> Result<u64, CliError> {
        let seed = self.parse_or("seed", 0u64)?;
        self.set("seed", seed.to_string());
        Ok(seed)
    }

    pub fn values(&self) -> &BTreeMap<String, String> {
        &self.values
    }
}
