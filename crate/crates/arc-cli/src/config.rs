//! Run configuration: a flat `key = value` file layered under environment
//! and command-line overrides.
//!
//! Precedence, lowest to highest: built-in defaults, the `--config` file,
//! the `ARC_OUT` environment variable (output directory only), then flags.
//! Core hyperparameters (`gamma`, `beta`, `lambda`, `eta_actor`,
//! `eta_critic`, `eta_p`) live unprefixed at the top level; everything
//! else is grouped with a dotted prefix (`env.dt`, `il.epochs`, `arc.n`,
//! ...). Unknown keys are rejected by name.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use arc_core::a2c::A2cHyper;
use arc_core::arc::ArcHyper;
use arc_core::env::EnvConfig;
use arc_core::eval::BatterySpec;
use arc_core::il::IlHyper;

// ===== errors ===========================================================

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config file {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: expected `key = value`, got `{text}`")]
    Syntax { path: PathBuf, line: usize, text: String },
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("config key `{key}`: {reason}")]
    BadValue { key: String, reason: String },
    #[error("config key `{0}` is out of range")]
    OutOfRange(String),
}

fn bad(key: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::BadValue { key: key.into(), reason: reason.into() }
}

// ===== the resolved configuration =======================================

/// Everything a subcommand needs, fully resolved and validated.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    /// Thread cap for the stages that shard work.
    pub workers: usize,
    /// Artifact directory.
    pub out: PathBuf,
    pub env: EnvConfig,
    /// Expert demonstration episodes for `collect-dataset`.
    pub dataset_episodes: u32,
    pub il: IlHyper,
    /// Shared actor-critic hyperparameters; `episodes` is the
    /// pre-training budget per adversary.
    pub a2c: A2cHyper,
    /// Ensemble size trained by `train-adv`.
    pub adv_count: u32,
    /// Initial closing-speed range (m/s) for adversary-phase episodes
    /// (pre-training, fine-tuning, adversarial testing): episodes start as
    /// approach encounters, host faster than the lead by a draw from this
    /// range. Gentle approaches resolve into the steady following that
    /// naturalistic episodes already cover, so the range keeps to speed
    /// differentials that genuinely stress the follower. Demonstration and
    /// naturalistic episodes always start speed-matched.
    pub adv_closing_min: f64,
    pub adv_closing_max: f64,
    /// Episode cap (steps) for adversary-phase episodes. An approach
    /// encounter resolves within tens of seconds — once the host settles
    /// back into steady following at the lead-velocity floor, nothing the
    /// lead does changes the picture, so long episodes only dilute the
    /// learning signal. Naturalistic episodes keep the base cap.
    pub adv_cap: u32,
    pub eta_p: f64,
    pub lambda: f64,
    pub arc_n: usize,
    pub arc_episodes: u32,
    pub fixed_adversary: bool,
    pub battery: BatterySpec,
    /// Fresh adversaries per `eval-adv` run, and their episode budget.
    pub advtest_adversaries: u32,
    pub advtest_episodes: u32,
}

impl Default for RunConfig {
    fn default() -> Self {
        let arc = ArcHyper::default();
        RunConfig {
            seed: 2,
            workers: 1,
            out: PathBuf::from("out"),
            env: EnvConfig::default(),
            dataset_episodes: 100,
            il: IlHyper::default(),
            a2c: A2cHyper::default(),
            adv_count: 5,
            adv_closing_min: 12.0,
            adv_closing_max: 16.0,
            adv_cap: 400,
            eta_p: arc.eta_p,
            lambda: arc.lambda,
            arc_n: arc.n_envs,
            arc_episodes: arc.episodes,
            fixed_adversary: arc.fixed_adversary,
            battery: BatterySpec::default(),
            advtest_adversaries: 5,
            advtest_episodes: 300,
        }
    }
}

impl RunConfig {
    /// Fine-tuning hyperparameters assembled from the flat fields.
    pub fn arc_hyper(&self) -> ArcHyper {
        ArcHyper {
            eta_p: self.eta_p,
            lambda: self.lambda,
            n_envs: self.arc_n,
            episodes: self.arc_episodes,
            fixed_adversary: self.fixed_adversary,
            a2c: self.a2c,
        }
    }

    /// Adversarial-testing hyperparameters: the shared actor-critic
    /// settings with the testing episode budget.
    pub fn advtest_hyper(&self) -> A2cHyper {
        A2cHyper { episodes: self.advtest_episodes, ..self.a2c }
    }

    /// Layer one file, the environment, and override pairs over the
    /// defaults, then validate the result.
    pub fn build(
        config_path: Option<&Path>,
        env_out: Option<&str>,
        overrides: &[(String, String)],
    ) -> Result<RunConfig, ConfigError> {
        let mut cfg = RunConfig::default();
        if let Some(path) = config_path {
            cfg.apply_file(path)?;
        }
        if let Some(dir) = env_out {
            cfg.out = PathBuf::from(dir);
        }
        for (key, value) in overrides {
            cfg.apply(key, value)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn apply_file(&mut self, path: &Path) -> Result<(), ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(ConfigError::Syntax {
                    path: path.to_path_buf(),
                    line: i + 1,
                    text: line.to_string(),
                });
            };
            self.apply(key.trim(), value.trim())?;
        }
        Ok(())
    }

    /// Set one key. Later applications win, so callers control precedence
    /// by application order.
    pub fn apply(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        match key {
            // Top-level training constants and run basics.
            "seed" => self.seed = parse(key, value)?,
            "workers" => self.workers = parse(key, value)?,
            "out" => self.out = PathBuf::from(value),
            "gamma" => self.a2c.gamma = parse(key, value)?,
            "beta" => self.a2c.beta = parse(key, value)?,
            "lambda" => self.lambda = parse(key, value)?,
            "eta_actor" => self.a2c.eta_actor = parse(key, value)?,
            "eta_critic" => self.a2c.eta_critic = parse(key, value)?,
            "eta_p" => self.eta_p = parse(key, value)?,

            // Simulation.
            "env.dt" => self.env.dt = parse(key, value)?,
            "env.episode_cap" => self.env.episode_cap = parse(key, value)?,
            "env.mu" => self.env.mu = parse(key, value)?,
            "env.mu_min" => self.env.mu_min = parse(key, value)?,
            "env.mu_max" => self.env.mu_max = parse(key, value)?,
            "env.v_lead_min" => self.env.v_lead_min = parse(key, value)?,
            "env.v_lead_max" => self.env.v_lead_max = parse(key, value)?,
            "env.lead_a_min" => self.env.lead_a_min = parse(key, value)?,
            "env.lead_a_max" => self.env.lead_a_max = parse(key, value)?,
            "env.pedal_gas_gain" => self.env.pedal_gas_gain = parse(key, value)?,
            "env.pedal_brake_gain" => self.env.pedal_brake_gain = parse(key, value)?,
            "env.tau" => self.env.tau = parse(key, value)?,
            "env.gravity" => self.env.gravity = parse(key, value)?,
            "env.h0_min" => self.env.h0_min = parse(key, value)?,
            "env.h0_max" => self.env.h0_max = parse(key, value)?,
            "env.v_floor" => self.env.v_floor = parse(key, value)?,
            "env.t_h_max" => self.env.t_h_max = parse(key, value)?,

            // Stage-specific knobs.
            "dataset.episodes" => self.dataset_episodes = parse(key, value)?,
            "il.lr" => self.il.lr = parse(key, value)?,
            "il.batch" => self.il.batch_size = parse(key, value)?,
            "il.epochs" => self.il.epochs = parse(key, value)?,
            "il.val_frac" => self.il.val_frac = parse(key, value)?,
            "adv.window" => self.a2c.window = parse(key, value)?,
            "adv.var_floor" => self.a2c.var_floor = parse(key, value)?,
            "adv.episodes" => self.a2c.episodes = parse(key, value)?,
            "adv.count" => self.adv_count = parse(key, value)?,
            "adv.closing_min" => self.adv_closing_min = parse(key, value)?,
            "adv.closing_max" => self.adv_closing_max = parse(key, value)?,
            "adv.cap" => self.adv_cap = parse(key, value)?,
            "arc.n" => self.arc_n = parse(key, value)?,
            "arc.episodes" => self.arc_episodes = parse(key, value)?,
            "arc.fixed_adversary" => self.fixed_adversary = parse_bool(key, value)?,
            "battery.frictions" => self.battery.frictions = parse_list(key, value)?,
            "battery.profiles" => self.battery.profiles_per_friction = parse(key, value)?,
            "battery.v_min" => self.battery.v_min = parse(key, value)?,
            "battery.v_max" => self.battery.v_max = parse(key, value)?,
            "advtest.adversaries" => self.advtest_adversaries = parse(key, value)?,
            "advtest.episodes" => self.advtest_episodes = parse(key, value)?,

            _ => return Err(ConfigError::UnknownKey(key.to_string())),
        }
        Ok(())
    }

    /// Range-check every group, naming the offending key.
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.env.validate().map_err(|k| ConfigError::OutOfRange(k.to_string()))?;
        self.il.validate().map_err(|k| ConfigError::OutOfRange(k.to_string()))?;
        self.a2c.validate().map_err(|k| ConfigError::OutOfRange(k.to_string()))?;
        self.arc_hyper()
            .validate()
            .map_err(|k| ConfigError::OutOfRange(k.to_string()))?;
        if self.workers == 0 {
            return Err(ConfigError::OutOfRange("workers".into()));
        }
        self.adversary_env()
            .validate()
            .map_err(|_| ConfigError::OutOfRange("adv.closing_min/adv.closing_max".into()))?;
        if self.adv_cap == 0 || self.adv_cap > 100_000 {
            return Err(ConfigError::OutOfRange("adv.cap".into()));
        }
        if self.battery.frictions.is_empty() {
            return Err(ConfigError::OutOfRange("battery.frictions".into()));
        }
        if self.battery.frictions.iter().any(|&m| !(m > 0.0 && m.is_finite())) {
            return Err(ConfigError::OutOfRange("battery.frictions".into()));
        }
        if self.battery.profiles_per_friction == 0 {
            return Err(ConfigError::OutOfRange("battery.profiles".into()));
        }
        if !(self.battery.v_min > 0.0 && self.battery.v_max > self.battery.v_min) {
            return Err(ConfigError::OutOfRange("battery.v_min".into()));
        }
        Ok(())
    }

    /// The full key set, one `key = value` line each, in `apply` order.
    /// `--help` prints this as the config reference.
    /// Environment for adversary-phase episodes: the base env with the
    /// closing-speed cap applied. Demonstration and battery episodes use
    /// `self.env` (and the battery band) unchanged.
    pub fn adversary_env(&self) -> EnvConfig {
        let mut env = self.env.clone();
        env.closing_min = self.adv_closing_min;
        env.closing_max = self.adv_closing_max;
        env.episode_cap = self.adv_cap;
        env
    }

    pub fn reference(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("seed", self.seed.to_string());
        kv("workers", self.workers.to_string());
        kv("out", self.out.display().to_string());
        kv("gamma", self.a2c.gamma.to_string());
        kv("beta", self.a2c.beta.to_string());
        kv("lambda", self.lambda.to_string());
        kv("eta_actor", self.a2c.eta_actor.to_string());
        kv("eta_critic", self.a2c.eta_critic.to_string());
        kv("eta_p", self.eta_p.to_string());
        kv("env.dt", self.env.dt.to_string());
        kv("env.episode_cap", self.env.episode_cap.to_string());
        kv("env.mu", self.env.mu.to_string());
        kv("env.mu_min", self.env.mu_min.to_string());
        kv("env.mu_max", self.env.mu_max.to_string());
        kv("env.v_lead_min", self.env.v_lead_min.to_string());
        kv("env.v_lead_max", self.env.v_lead_max.to_string());
        kv("env.lead_a_min", self.env.lead_a_min.to_string());
        kv("env.lead_a_max", self.env.lead_a_max.to_string());
        kv("env.pedal_gas_gain", self.env.pedal_gas_gain.to_string());
        kv("env.pedal_brake_gain", self.env.pedal_brake_gain.to_string());
        kv("env.tau", self.env.tau.to_string());
        kv("env.gravity", self.env.gravity.to_string());
        kv("env.h0_min", self.env.h0_min.to_string());
        kv("env.h0_max", self.env.h0_max.to_string());
        kv("env.v_floor", self.env.v_floor.to_string());
        kv("env.t_h_max", self.env.t_h_max.to_string());
        kv("dataset.episodes", self.dataset_episodes.to_string());
        kv("il.lr", self.il.lr.to_string());
        kv("il.batch", self.il.batch_size.to_string());
        kv("il.epochs", self.il.epochs.to_string());
        kv("il.val_frac", self.il.val_frac.to_string());
        kv("adv.window", self.a2c.window.to_string());
        kv("adv.var_floor", self.a2c.var_floor.to_string());
        kv("adv.episodes", self.a2c.episodes.to_string());
        kv("adv.count", self.adv_count.to_string());
        kv("adv.closing_min", self.adv_closing_min.to_string());
        kv("adv.closing_max", self.adv_closing_max.to_string());
        kv("adv.cap", self.adv_cap.to_string());
        kv("arc.n", self.arc_n.to_string());
        kv("arc.episodes", self.arc_episodes.to_string());
        kv("arc.fixed_adversary", self.fixed_adversary.to_string());
        kv(
            "battery.frictions",
            self.battery
                .frictions
                .iter()
                .map(|m| m.to_string())
                .collect::<Vec<_>>()
                .join(","),
        );
        kv("battery.profiles", self.battery.profiles_per_friction.to_string());
        kv("battery.v_min", self.battery.v_min.to_string());
        kv("battery.v_max", self.battery.v_max.to_string());
        kv("advtest.adversaries", self.advtest_adversaries.to_string());
        kv("advtest.episodes", self.advtest_episodes.to_string());
        s
    }
}

/// True when `key` is settable through `apply` — used by the argument
/// pre-scan to tell config overrides apart from ordinary flags.
pub fn is_config_key(key: &str) -> bool {
    let mut probe = RunConfig::default();
    !matches!(probe.apply(key, "1"), Err(ConfigError::UnknownKey(_)))
}

// ===== value parsing =====================================================

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e| bad(key, format!("cannot parse `{value}`: {e}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool, ConfigError> {
    match value {
        "true" | "1" => Ok(true),
        "false" | "0" => Ok(false),
        _ => Err(bad(key, format!("expected true/false, got `{value}`"))),
    }
}

fn parse_list(key: &str, value: &str) -> Result<Vec<f64>, ConfigError> {
    value.split(',').map(|item| parse(key, item.trim())).collect()
}

// ===== tests =============================================================
