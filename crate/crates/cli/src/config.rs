//! Effective run configuration: profile defaults, then the
//! `GREENSENTRY_SEED` environment variable, then the key=value config file,
//! then command-line flags. Every effective value is echoed into the run
//! manifest.

use std::fs;
use std::io::BufReader;
use std::path::Path;

use serde::Serialize;

use greensentry_core::autoencoder::{Activation, ModelConfig, OutputActivation};
use greensentry_core::error::{Error, Result};
use greensentry_core::rules::{default_ruleset, RuleSet};
use greensentry_core::scale::SplitMode;
use greensentry_core::simulate::SimConfig;
use greensentry_core::time::Timestamp;
use greensentry_core::train::{Optimizer, TrainConfig};

pub const SEED_ENV_VAR: &str = "GREENSENTRY_SEED";
pub const DEFAULT_SEED: u64 = 7;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    /// The hyperparameters reported in the original experiment
    /// (60 epochs, batch 8, lr 1e-6, SGD).
    Paper,
    /// Adam with a practical learning rate; the acceptance profile.
    Tuned,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunConfig {
    pub seed: u64,
    pub profile: Profile,
    pub sim: SimConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub rules: RuleSet,
    pub split_ratio: f64,
    pub split_mode: SplitMode,
    pub threshold_k: usize,
    pub max_fill_minutes: i64,
}

impl RunConfig {
    fn profile_defaults(profile: Profile, seed: u64) -> Self {
        let train = match profile {
            Profile::Paper => TrainConfig::paper_profile(seed),
            Profile::Tuned => TrainConfig::tuned_profile(seed),
        };
        RunConfig {
            seed,
            profile,
            sim: SimConfig {
                seed,
                ..SimConfig::default()
            },
            model: ModelConfig::default(),
            train,
            rules: default_ruleset(),
            split_ratio: 0.75,
            split_mode: SplitMode::Chronological,
            threshold_k: greensentry_core::detect::DEFAULT_K,
            max_fill_minutes: 10,
        }
    }

    /// Builds the effective config. `flag_seed` is the `--seed` flag, highest
    /// precedence; the environment variable is the lowest seed source.
    pub fn build(
        profile: Profile,
        config_file: Option<&Path>,
        rules_file: Option<&Path>,
        flag_seed: Option<u64>,
    ) -> Result<Self> {
        let env_seed = match std::env::var(SEED_ENV_VAR) {
            Ok(text) => Some(text.parse::<u64>().map_err(|_| {
                Error::InvalidConfig(format!("{SEED_ENV_VAR} must be a u64, got {text:?}"))
            })?),
            Err(_) => None,
        };
        let mut config = Self::profile_defaults(profile, env_seed.unwrap_or(DEFAULT_SEED));
        if let Some(path) = config_file {
            let text = fs::read_to_string(path)?;
            config.apply_file(&text)?;
        }
        if let Some(path) = rules_file {
            config.rules = RuleSet::from_config(BufReader::new(fs::File::open(path)?))?;
        }
        if let Some(seed) = flag_seed {
            config.set_seed(seed);
        }
        config.validate()?;
        Ok(config)
    }

    fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.sim.seed = seed;
        self.train.seed = seed;
    }

    fn apply_file(&mut self, text: &str) -> Result<()> {
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Ingest {
                row: i + 1,
                message: format!("expected key=value, found {line:?}"),
            })?;
            self.apply_key(key.trim(), value.trim())
                .map_err(|e| Error::Ingest {
                    row: i + 1,
                    message: e.to_string(),
                })?;
        }
        Ok(())
    }

    fn apply_key(&mut self, key: &str, value: &str) -> Result<()> {
        fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .parse()
                .map_err(|_| Error::InvalidConfig(format!("bad value for {key}: {value:?}")))
        }
        match key {
            "seed" => self.set_seed(parse(key, value)?),
            "start" => self.sim.start = Timestamp::parse(value)?,
            "days" => self.sim.days = parse(key, value)?,
            "irrigation_times" => {
                self.sim.irrigation_times = value
                    .split(',')
                    .filter(|s| !s.trim().is_empty())
                    .map(|s| parse("irrigation_times", s.trim()))
                    .collect::<Result<_>>()?;
            }
            "noise_moisture" => self.sim.noise_scale[0] = parse(key, value)?,
            "noise_light" => self.sim.noise_scale[1] = parse(key, value)?,
            "noise_air_quality" => self.sim.noise_scale[2] = parse(key, value)?,
            "noise_temperature" => self.sim.noise_scale[3] = parse(key, value)?,
            "noise_humidity" => self.sim.noise_scale[4] = parse(key, value)?,
            "p_cold_snap" => self.sim.event_probabilities.cold_snap = parse(key, value)?,
            "p_pollution_spike" => {
                self.sim.event_probabilities.pollution_spike = parse(key, value)?
            }
            "p_sensor_freeze" => self.sim.event_probabilities.sensor_freeze = parse(key, value)?,
            "node_size" => self.model.node_size = parse(key, value)?,
            "hidden_activation" => {
                self.model.hidden_activation = match value {
                    "relu" => Activation::Relu,
                    "tanh" => Activation::Tanh,
                    other => {
                        return Err(Error::InvalidConfig(format!(
                            "hidden_activation must be relu or tanh, got {other:?}"
                        )))
                    }
                }
            }
            "output_activation" => {
                self.model.output_activation = match value {
                    "sigmoid" => OutputActivation::Sigmoid,
                    "linear" => OutputActivation::Linear,
                    other => {
                        return Err(Error::InvalidConfig(format!(
                            "output_activation must be sigmoid or linear, got {other:?}"
                        )))
                    }
                }
            }
            "epochs" => self.train.epochs = parse(key, value)?,
            "batch_size" => self.train.batch_size = parse(key, value)?,
            "learning_rate" => self.train.learning_rate = parse(key, value)?,
            "optimizer" => {
                self.train.optimizer = match value {
                    "sgd" => Optimizer::Sgd,
                    "adam" => Optimizer::adam(),
                    other => {
                        return Err(Error::InvalidConfig(format!(
                            "optimizer must be sgd or adam, got {other:?}"
                        )))
                    }
                }
            }
            "split_ratio" => self.split_ratio = parse(key, value)?,
            "split_mode" => {
                self.split_mode = match value {
                    "chronological" => SplitMode::Chronological,
                    "shuffled" => SplitMode::Shuffled { seed: self.seed },
                    other => {
                        return Err(Error::InvalidConfig(format!(
                            "split_mode must be chronological or shuffled, got {other:?}"
                        )))
                    }
                }
            }
            "threshold_k" => self.threshold_k = parse(key, value)?,
            "max_fill_minutes" => self.max_fill_minutes = parse(key, value)?,
            other => {
                return Err(Error::InvalidConfig(format!(
                    "unknown config key {other:?}"
                )))
            }
        }
        Ok(())
    }

    fn validate(&self) -> Result<()> {
        self.sim.validate()?;
        self.model.validate()?;
        if !(self.split_ratio > 0.0 && self.split_ratio < 1.0) {
            return Err(Error::InvalidConfig("split_ratio must be in (0, 1)".into()));
        }
        if self.threshold_k == 0 {
            return Err(Error::InvalidConfig("threshold_k must be >= 1".into()));
        }
        if self.max_fill_minutes < 1 {
            return Err(Error::InvalidConfig("max_fill_minutes must be >= 1".into()));
        }
        Ok(())
    }
}
