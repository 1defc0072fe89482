//! Run configuration: a flat `key = value` file plus command-line
//! overrides. Every key is validated up front and unknown keys are
//! rejected, so a run directory's resolved snapshot fully determines the
//! run.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use execq_core::{AgentConfig, EnvConfig, FeatureSet, RmsPropConfig, SynthModel, SynthSpec};

use crate::CliError;

/// Data source for windows.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataSource {
    Csv,
    Synth,
}

/// Fully resolved run configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub features: FeatureSet,
    pub out: PathBuf,

    pub data_source: DataSource,
    pub data_path: String,
    pub data_instrument: String,
    pub data_hours: Vec<u8>,
    pub data_split_ratio: f64,
    pub data_max_fill_fraction: f64,

    pub synth_model: String,
    pub synth_vol: f64,
    pub synth_mu: f64,
    pub synth_kappa: f64,
    pub synth_pbar: f64,
    pub synth_p0: f64,
    pub synth_seed: u64,
    pub synth_windows: usize,
    /// Points for `synth-gen`; 0 derives one window's worth.
    pub synth_length: usize,

    pub env_q0: u32,
    pub env_periods: usize,
    pub env_seconds_per_period: usize,
    pub env_penalty_a: f64,
    pub env_lot_multiple: u32,
    pub env_strict_terminal: bool,

    pub agent_gamma: f64,
    pub agent_epsilon0: f64,
    pub agent_tau: f64,
    pub agent_rho: u64,
    pub agent_minibatch: usize,
    pub agent_pretrain_episodes: u64,
    pub agent_episodes: u64,

    pub nn_eta: f64,
    pub nn_beta: f64,
    pub nn_eps: f64,

    pub replay_capacity: usize,

    pub policy_price_buckets: usize,
    pub policy_qv_buckets: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            features: FeatureSet::Tip,
            out: PathBuf::from("run"),
            data_source: DataSource::Synth,
            data_path: String::new(),
            data_instrument: "SYNTH".into(),
            data_hours: vec![11, 12, 13],
            data_split_ratio: 0.8,
            data_max_fill_fraction: 0.05,
            synth_model: "martingale".into(),
            synth_vol: 0.01,
            synth_mu: 0.0,
            synth_kappa: 0.01,
            synth_pbar: 10.0,
            synth_p0: 10.0,
            synth_seed: 42,
            synth_windows: 100,
            synth_length: 0,
            env_q0: 20,
            env_periods: 5,
            env_seconds_per_period: 720,
            env_penalty_a: 0.01,
            env_lot_multiple: 1,
            env_strict_terminal: false,
            agent_gamma: 0.99,
            agent_epsilon0: 1.0,
            agent_tau: 0.995,
            agent_rho: 15,
            agent_minibatch: 32,
            agent_pretrain_episodes: 200,
            agent_episodes: 1000,
            nn_eta: 1e-3,
            nn_beta: 0.9,
            nn_eps: 1e-8,
            replay_capacity: 10_000,
            policy_price_buckets: 3,
            policy_qv_buckets: 3,
        }
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, CliError>
where
    T::Err: std::fmt::Display,
{
    value
        .trim()
        .parse()
        .map_err(|e| usage(format!("config key '{key}': bad value '{value}' ({e})")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool, CliError> {
    match value.trim() {
        "true" => Ok(true),
        "false" => Ok(false),
        other => Err(usage(format!(
            "config key '{key}': expected true/false, got '{other}'"
        ))),
    }
}

impl RunConfig {
    /// Applies one `key = value` pair; unknown keys are rejected.
    pub fn apply(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        let v = value.trim();
        match key {
            "seed" => self.seed = parse_num(key, v)?,
            "features" => {
                self.features = FeatureSet::parse(v).map_err(|e| usage(e.to_string()))?
            }
            "data.source" => {
                self.data_source = match v {
                    "csv" => DataSource::Csv,
                    "synth" => DataSource::Synth,
                    other => {
                        return Err(usage(format!(
                            "data.source must be csv or synth, got '{other}'"
                        )))
                    }
                }
            }
            "data.path" => self.data_path = v.to_string(),
            "data.instrument" => self.data_instrument = v.to_string(),
            "data.hours" => {
                let hours: Result<Vec<u8>, CliError> =
                    v.split(',').map(|h| parse_num(key, h)).collect();
                let hours = hours?;
                if hours.is_empty() || hours.iter().any(|&h| h > 23) {
                    return Err(usage("data.hours must list hours in 0..=23"));
                }
                self.data_hours = hours;
            }
            "data.split_ratio" => self.data_split_ratio = parse_num(key, v)?,
            "data.max_fill_fraction" => self.data_max_fill_fraction = parse_num(key, v)?,
            "synth.model" => {
                if !["martingale", "drift", "ou"].contains(&v) {
                    return Err(usage(format!(
                        "synth.model must be martingale, drift or ou, got '{v}'"
                    )));
                }
                self.synth_model = v.to_string();
            }
            "synth.vol" => self.synth_vol = parse_num(key, v)?,
            "synth.mu" => self.synth_mu = parse_num(key, v)?,
            "synth.kappa" => self.synth_kappa = parse_num(key, v)?,
            "synth.pbar" => self.synth_pbar = parse_num(key, v)?,
            "synth.p0" => self.synth_p0 = parse_num(key, v)?,
            "synth.seed" => self.synth_seed = parse_num(key, v)?,
            "synth.windows" => self.synth_windows = parse_num(key, v)?,
            "synth.length" => self.synth_length = parse_num(key, v)?,
            "env.q0" => self.env_q0 = parse_num(key, v)?,
            "env.periods" => self.env_periods = parse_num(key, v)?,
            "env.seconds_per_period" => self.env_seconds_per_period = parse_num(key, v)?,
            "env.penalty_a" => self.env_penalty_a = parse_num(key, v)?,
            "env.lot_multiple" => self.env_lot_multiple = parse_num(key, v)?,
            "env.strict_terminal" => self.env_strict_terminal = parse_bool(key, v)?,
            "agent.gamma" => self.agent_gamma = parse_num(key, v)?,
            "agent.epsilon0" => self.agent_epsilon0 = parse_num(key, v)?,
            "agent.tau" => self.agent_tau = parse_num(key, v)?,
            "agent.rho" => self.agent_rho = parse_num(key, v)?,
            "agent.minibatch" => self.agent_minibatch = parse_num(key, v)?,
            "agent.pretrain_episodes" => self.agent_pretrain_episodes = parse_num(key, v)?,
            "agent.episodes" => self.agent_episodes = parse_num(key, v)?,
            "nn.eta" => self.nn_eta = parse_num(key, v)?,
            "nn.beta" => self.nn_beta = parse_num(key, v)?,
            "nn.eps" => self.nn_eps = parse_num(key, v)?,
            "replay.capacity" => self.replay_capacity = parse_num(key, v)?,
            "policy.price_buckets" => self.policy_price_buckets = parse_num(key, v)?,
            "policy.qv_buckets" => self.policy_qv_buckets = parse_num(key, v)?,
            other => return Err(usage(format!("unknown config key '{other}'"))),
        }
        Ok(())
    }

    /// Parses a config file of `key = value` lines; `#` starts a comment.
    pub fn apply_file(&mut self, path: &Path) -> Result<(), CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| usage(format!("config line {}: expected key=value", i + 1)))?;
            self.apply(key.trim(), value)?;
        }
        Ok(())
    }

    /// Applies a `--set key=value` override.
    pub fn apply_set(&mut self, pair: &str) -> Result<(), CliError> {
        let (key, value) = pair
            .split_once('=')
            .ok_or_else(|| usage(format!("--set expects key=value, got '{pair}'")))?;
        self.apply(key.trim(), value)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.env_config().validate().map_err(|e| usage(e.to_string()))?;
        self.agent_config()
            .validate()
            .map_err(|e| usage(e.to_string()))?;
        if !(self.data_split_ratio > 0.0 && self.data_split_ratio < 1.0) {
            return Err(usage("data.split_ratio must be in (0, 1)"));
        }
        if !(self.data_max_fill_fraction >= 0.0 && self.data_max_fill_fraction <= 1.0) {
            return Err(usage("data.max_fill_fraction must be in [0, 1]"));
        }
        if self.replay_capacity == 0 {
            return Err(usage("replay.capacity must be >= 1"));
        }
        if self.synth_vol < 0.0 {
            return Err(usage("synth.vol must be >= 0"));
        }
        if !(self.synth_p0 > 0.0) {
            return Err(usage("synth.p0 must be > 0"));
        }
        if self.data_source == DataSource::Synth && self.synth_windows < 2 {
            return Err(usage("synth.windows must be >= 2 for a train/eval split"));
        }
        if !(self.nn_eta > 0.0) || !(self.nn_beta > 0.0 && self.nn_beta < 1.0) {
            return Err(usage("nn.eta must be > 0 and nn.beta in (0, 1)"));
        }
        if self.policy_price_buckets == 0 || self.policy_qv_buckets == 0 {
            return Err(usage("policy bucket counts must be >= 1"));
        }
        Ok(())
    }

    pub fn env_config(&self) -> EnvConfig {
        EnvConfig {
            q0: self.env_q0,
            periods: self.env_periods,
            seconds_per_period: self.env_seconds_per_period,
            // One-second forced liquidation step, by construction.
            terminal_seconds: 1,
            penalty_a: self.env_penalty_a,
            lot_multiple: self.env_lot_multiple,
            strict_terminal: self.env_strict_terminal,
        }
    }

    pub fn agent_config(&self) -> AgentConfig {
        AgentConfig {
            gamma: self.agent_gamma,
            epsilon0: self.agent_epsilon0,
            tau: self.agent_tau,
            rho: self.agent_rho,
            minibatch: self.agent_minibatch,
            pretrain_episodes: self.agent_pretrain_episodes,
            episodes: self.agent_episodes,
            seed: self.seed,
        }
    }

    pub fn rms_config(&self) -> RmsPropConfig {
        RmsPropConfig {
            eta: self.nn_eta,
            beta: self.nn_beta,
            eps: self.nn_eps,
        }
    }

    pub fn synth_spec(&self) -> Result<SynthSpec, CliError> {
        let model = match self.synth_model.as_str() {
            "martingale" => SynthModel::Martingale,
            "drift" => SynthModel::Drift { mu: self.synth_mu },
            "ou" => SynthModel::Ou {
                kappa: self.synth_kappa,
                pbar: self.synth_pbar,
            },
            other => return Err(usage(format!("unknown synth.model '{other}'"))),
        };
        Ok(SynthSpec {
            model,
            vol: self.synth_vol,
            p0: self.synth_p0,
        })
    }

    fn hours_string(&self) -> String {
        self.data_hours
            .iter()
            .map(|h| h.to_string())
            .collect::<Vec<_>>()
            .join(",")
    }

    /// Canonical resolved snapshot: every key, sorted, one per line. The
    /// output directory is deliberately not part of the snapshot so two
    /// runs of the same configuration compare byte-identical.
    pub fn snapshot(&self) -> String {
        let mut pairs: Vec<(&str, String)> = vec![
            ("seed", self.seed.to_string()),
            ("features", self.features.to_string()),
            (
                "data.source",
                match self.data_source {
                    DataSource::Csv => "csv".into(),
                    DataSource::Synth => "synth".into(),
                },
            ),
            ("data.path", self.data_path.clone()),
            ("data.instrument", self.data_instrument.clone()),
            ("data.hours", self.hours_string()),
            ("data.split_ratio", self.data_split_ratio.to_string()),
            (
                "data.max_fill_fraction",
                self.data_max_fill_fraction.to_string(),
            ),
            ("synth.model", self.synth_model.clone()),
            ("synth.vol", self.synth_vol.to_string()),
            ("synth.mu", self.synth_mu.to_string()),
            ("synth.kappa", self.synth_kappa.to_string()),
            ("synth.pbar", self.synth_pbar.to_string()),
            ("synth.p0", self.synth_p0.to_string()),
            ("synth.seed", self.synth_seed.to_string()),
            ("synth.windows", self.synth_windows.to_string()),
            ("synth.length", self.synth_length.to_string()),
            ("env.q0", self.env_q0.to_string()),
            ("env.periods", self.env_periods.to_string()),
            (
                "env.seconds_per_period",
                self.env_seconds_per_period.to_string(),
            ),
            ("env.penalty_a", self.env_penalty_a.to_string()),
            ("env.lot_multiple", self.env_lot_multiple.to_string()),
            ("env.strict_terminal", self.env_strict_terminal.to_string()),
            ("agent.gamma", self.agent_gamma.to_string()),
            ("agent.epsilon0", self.agent_epsilon0.to_string()),
            ("agent.tau", self.agent_tau.to_string()),
            ("agent.rho", self.agent_rho.to_string()),
            ("agent.minibatch", self.agent_minibatch.to_string()),
            (
                "agent.pretrain_episodes",
                self.agent_pretrain_episodes.to_string(),
            ),
            ("agent.episodes", self.agent_episodes.to_string()),
            ("nn.eta", self.nn_eta.to_string()),
            ("nn.beta", self.nn_beta.to_string()),
            ("nn.eps", self.nn_eps.to_string()),
            ("replay.capacity", self.replay_capacity.to_string()),
            (
                "policy.price_buckets",
                self.policy_price_buckets.to_string(),
            ),
            ("policy.qv_buckets", self.policy_qv_buckets.to_string()),
        ];
        pairs.sort_by(|a, b| a.0.cmp(b.0));
        let mut out = String::new();
        for (k, v) in pairs {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_key_rejected() {
        let mut cfg = RunConfig::default();
        assert!(matches!(
            cfg.apply("env.bogus", "1"),
            Err(CliError::Usage(_))
        ));
    }

    #[test]
    fn set_override_parses() {
        let mut cfg = RunConfig::default();
        cfg.apply_set("env.q0=7").unwrap();
        cfg.apply_set("features=tipqv").unwrap();
        assert_eq!(cfg.env_q0, 7);
        assert_eq!(cfg.features, FeatureSet::Tipqv);
        assert!(cfg.apply_set("garbage").is_err());
    }

    #[test]
    fn snapshot_reparses_to_same_config() {
        let mut cfg = RunConfig::default();
        cfg.apply_set("agent.tau=0.9971").unwrap();
        cfg.apply_set("synth.vol=0.025").unwrap();
        cfg.apply_set("data.hours=11,13").unwrap();
        let snap = cfg.snapshot();

        let mut reparsed = RunConfig::default();
        for line in snap.lines() {
            let (k, v) = line.split_once('=').unwrap();
            reparsed.apply(k.trim(), v).unwrap();
        }
        reparsed.out = cfg.out.clone();
        assert_eq!(cfg, reparsed);
        // Snapshot is stable under a second pass.
        assert_eq!(reparsed.snapshot(), snap);
    }

    #[test]
    fn validate_catches_bad_ranges() {
        let mut cfg = RunConfig::default();
        cfg.data_split_ratio = 1.5;
        assert!(cfg.validate().is_err());
        let mut cfg = RunConfig::default();
        cfg.agent_tau = 1.0;
        assert!(cfg.validate().is_err());
    }
}
