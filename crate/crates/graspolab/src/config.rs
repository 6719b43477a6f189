//! Flat `key = value` run configuration. Every key has a default and
//! unknown keys are rejected.

use std::fmt::Write as _;
use std::path::PathBuf;

use graspolab_core::mapping::DegenerateAxisPolicy;
use graspolab_core::sim::{smallest_gap, DEFAULT_MSTAR};
use graspolab_core::{action_angles, AgentConfig, EnvConfig, FitnessKind, GaConfig, MappingMatrix};

use crate::error::HarnessError;
use crate::io::fmt_f64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitMethod {
    Ga,
    Lr,
    Pi,
}

impl FitMethod {
    pub fn name(self) -> &'static str {
        match self {
            FitMethod::Ga => "ga",
            FitMethod::Lr => "lr",
            FitMethod::Pi => "pi",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "ga" => Some(FitMethod::Ga),
            "lr" => Some(FitMethod::Lr),
            "pi" => Some(FitMethod::Pi),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,

    pub data_n: usize,
    pub data_sigma_r: f64,
    pub data_mstar: [f64; 9],
    /// Observations CSV read by `compare-fitness` and `fit-position`.
    pub data_path: PathBuf,
    pub train_fraction: f64,

    pub ga_population: usize,
    pub ga_parents: usize,
    pub ga_generations: usize,
    pub ga_init_low: f64,
    pub ga_init_high: f64,
    pub ga_mutation: f64,
    pub ga_fitness: FitnessKind,

    pub fit_method: FitMethod,
    pub lr_constant_degenerate: bool,

    pub n_actions: usize,
    pub gamma: f64,
    pub epsilon_final: f64,
    pub episodes: usize,
    pub training_onset: usize,
    pub target_sync: usize,
    pub minibatch: usize,
    pub learning_rate: f64,
    pub replay_capacity: usize,
    pub huber_delta: f64,
    pub rms_rho: f64,
    pub rms_epsilon: f64,

    /// `None` means half the smallest gap of the angle table.
    pub tolerance: Option<f64>,
    pub noise_sigma: f64,
    pub detector_jitter: f64,
    pub crop_margin: f64,
    pub length_min: f64,
    pub length_max: f64,
    pub aspect_min: f64,
    pub aspect_max: f64,

    /// Empty means a freshly initialized network.
    pub checkpoint: Option<PathBuf>,
    pub attempts: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let ga = GaConfig::default();
        let agent = AgentConfig::default();
        let env = EnvConfig::for_actions(3, 0).expect("default action table");
        Self {
            seed: 0,
            data_n: 50,
            data_sigma_r: 0.0,
            data_mstar: DEFAULT_MSTAR,
            data_path: PathBuf::from("observations.csv"),
            train_fraction: 0.8,
            ga_population: ga.solutions_per_population,
            ga_parents: ga.num_parents,
            ga_generations: ga.generations,
            ga_init_low: ga.gene_init_range.start,
            ga_init_high: ga.gene_init_range.end,
            ga_mutation: ga.mutation_scale,
            ga_fitness: FitnessKind::F3,
            fit_method: FitMethod::Pi,
            lr_constant_degenerate: true,
            n_actions: agent.n_actions,
            gamma: agent.gamma,
            epsilon_final: agent.epsilon_final,
            episodes: agent.n_episodes,
            training_onset: agent.training_onset,
            target_sync: agent.target_sync,
            minibatch: agent.minibatch,
            learning_rate: agent.learning_rate,
            replay_capacity: agent.replay_capacity,
            huber_delta: agent.huber_delta,
            rms_rho: agent.rms_rho,
            rms_epsilon: agent.rms_epsilon,
            tolerance: None,
            noise_sigma: env.noise_sigma,
            detector_jitter: env.detector_jitter,
            crop_margin: env.crop_margin,
            length_min: env.object_length.start,
            length_max: env.object_length.end,
            aspect_min: env.aspect.start,
            aspect_max: env.aspect.end,
            checkpoint: None,
            attempts: 100,
        }
    }
}

fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, HarnessError> {
    value
        .parse()
        .map_err(|_| HarnessError::Config(format!("{key}: cannot parse {value:?}")))
}

fn flag(key: &str, value: &str) -> Result<bool, HarnessError> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(HarnessError::Config(format!(
            "{key}: expected true or false, got {value:?}"
        ))),
    }
}

impl RunConfig {
    /// Parses a config document on top of the defaults.
    pub fn parse(text: &str) -> Result<Self, HarnessError> {
        let mut cfg = Self::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                HarnessError::Config(format!("line {}: expected key = value", lineno + 1))
            })?;
            cfg.set(key.trim(), value.trim())?;
        }
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), HarnessError> {
        match key {
            "seed" => self.seed = num(key, value)?,
            "data.n" => self.data_n = num(key, value)?,
            "data.sigma_r" => self.data_sigma_r = num(key, value)?,
            "data.mstar" => {
                let vals: Vec<f64> = value
                    .split(',')
                    .map(|v| num(key, v.trim()))
                    .collect::<Result<_, _>>()?;
                self.data_mstar = vals.try_into().map_err(|_| {
                    HarnessError::Config(format!("{key}: expected 9 comma-separated values"))
                })?;
            }
            "data.path" => self.data_path = PathBuf::from(value),
            "split.train_fraction" => self.train_fraction = num(key, value)?,
            "ga.population" => self.ga_population = num(key, value)?,
            "ga.parents" => self.ga_parents = num(key, value)?,
            "ga.generations" => self.ga_generations = num(key, value)?,
            "ga.init_low" => self.ga_init_low = num(key, value)?,
            "ga.init_high" => self.ga_init_high = num(key, value)?,
            "ga.mutation" => self.ga_mutation = num(key, value)?,
            "ga.fitness" => {
                self.ga_fitness = FitnessKind::parse(value).ok_or_else(|| {
                    HarnessError::Config(format!("{key}: expected F1..F8, got {value:?}"))
                })?
            }
            "fit.method" => {
                self.fit_method = FitMethod::parse(value).ok_or_else(|| {
                    HarnessError::Config(format!("{key}: expected ga, lr or pi, got {value:?}"))
                })?
            }
            "lr.constant_degenerate" => self.lr_constant_degenerate = flag(key, value)?,
            "agent.n_actions" => self.n_actions = num(key, value)?,
            "agent.gamma" => self.gamma = num(key, value)?,
            "agent.epsilon_final" => self.epsilon_final = num(key, value)?,
            "agent.episodes" => self.episodes = num(key, value)?,
            "agent.training_onset" => self.training_onset = num(key, value)?,
            "agent.target_sync" => self.target_sync = num(key, value)?,
            "agent.minibatch" => self.minibatch = num(key, value)?,
            "agent.learning_rate" => self.learning_rate = num(key, value)?,
            "agent.replay_capacity" => self.replay_capacity = num(key, value)?,
            "agent.huber_delta" => self.huber_delta = num(key, value)?,
            "agent.rms_rho" => self.rms_rho = num(key, value)?,
            "agent.rms_epsilon" => self.rms_epsilon = num(key, value)?,
            "env.tolerance" => {
                self.tolerance = if value == "auto" {
                    None
                } else {
                    Some(num(key, value)?)
                };
            }
            "env.noise_sigma" => self.noise_sigma = num(key, value)?,
            "env.detector_jitter" => self.detector_jitter = num(key, value)?,
            "env.crop_margin" => self.crop_margin = num(key, value)?,
            "env.length_min" => self.length_min = num(key, value)?,
            "env.length_max" => self.length_max = num(key, value)?,
            "env.aspect_min" => self.aspect_min = num(key, value)?,
            "env.aspect_max" => self.aspect_max = num(key, value)?,
            "eval.checkpoint" => {
                self.checkpoint = if value.is_empty() {
                    None
                } else {
                    Some(PathBuf::from(value))
                };
            }
            "eval.attempts" => self.attempts = num(key, value)?,
            _ => return Err(HarnessError::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// Every key with its resolved value, in a fixed order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let mstar = self
            .data_mstar
            .iter()
            .map(|v| fmt_f64(*v))
            .collect::<Vec<_>>()
            .join(",");
        vec![
            ("seed", self.seed.to_string()),
            ("data.n", self.data_n.to_string()),
            ("data.sigma_r", fmt_f64(self.data_sigma_r)),
            ("data.mstar", mstar),
            ("data.path", self.data_path.display().to_string()),
            ("split.train_fraction", fmt_f64(self.train_fraction)),
            ("ga.population", self.ga_population.to_string()),
            ("ga.parents", self.ga_parents.to_string()),
            ("ga.generations", self.ga_generations.to_string()),
            ("ga.init_low", fmt_f64(self.ga_init_low)),
            ("ga.init_high", fmt_f64(self.ga_init_high)),
            ("ga.mutation", fmt_f64(self.ga_mutation)),
            ("ga.fitness", self.ga_fitness.label().to_string()),
            ("fit.method", self.fit_method.name().to_string()),
            (
                "lr.constant_degenerate",
                self.lr_constant_degenerate.to_string(),
            ),
            ("agent.n_actions", self.n_actions.to_string()),
            ("agent.gamma", fmt_f64(self.gamma)),
            ("agent.epsilon_final", fmt_f64(self.epsilon_final)),
            ("agent.episodes", self.episodes.to_string()),
            ("agent.training_onset", self.training_onset.to_string()),
            ("agent.target_sync", self.target_sync.to_string()),
            ("agent.minibatch", self.minibatch.to_string()),
            ("agent.learning_rate", fmt_f64(self.learning_rate)),
            ("agent.replay_capacity", self.replay_capacity.to_string()),
            ("agent.huber_delta", fmt_f64(self.huber_delta)),
            ("agent.rms_rho", fmt_f64(self.rms_rho)),
            ("agent.rms_epsilon", fmt_f64(self.rms_epsilon)),
            (
                "env.tolerance",
                self.tolerance.map_or_else(|| "auto".to_string(), fmt_f64),
            ),
            ("env.noise_sigma", fmt_f64(self.noise_sigma)),
            ("env.detector_jitter", fmt_f64(self.detector_jitter)),
            ("env.crop_margin", fmt_f64(self.crop_margin)),
            ("env.length_min", fmt_f64(self.length_min)),
            ("env.length_max", fmt_f64(self.length_max)),
            ("env.aspect_min", fmt_f64(self.aspect_min)),
            ("env.aspect_max", fmt_f64(self.aspect_max)),
            (
                "eval.checkpoint",
                self.checkpoint
                    .as_ref()
                    .map(|p| p.display().to_string())
                    .unwrap_or_default(),
            ),
            ("eval.attempts", self.attempts.to_string()),
        ]
    }

    /// The resolved config as a config document; parsing it gives back `self`.
    pub fn to_document(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.entries() {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    /// Single-line form used as the leading comment of output files.
    pub fn summary_line(&self, command: &str) -> String {
        let mut line = format!("# graspolab {command}");
        for (k, v) in self.entries() {
            let _ = write!(line, " {k}={v}");
        }
        line
    }

    pub fn mstar(&self) -> Result<MappingMatrix, HarnessError> {
        MappingMatrix::from_row_major(self.data_mstar)
            .map_err(|e| HarnessError::Config(format!("data.mstar: {e}")))
    }

    pub fn ga(&self) -> GaConfig {
        GaConfig {
            solutions_per_population: self.ga_population,
            num_parents: self.ga_parents,
            generations: self.ga_generations,
            gene_init_range: self.ga_init_low..self.ga_init_high,
            mutation_scale: self.ga_mutation,
            seed: self.seed,
        }
    }

    pub fn degenerate_policy(&self) -> DegenerateAxisPolicy {
        if self.lr_constant_degenerate {
            DegenerateAxisPolicy::ConstantFit
        } else {
            DegenerateAxisPolicy::Error
        }
    }

    pub fn agent(&self) -> AgentConfig {
        AgentConfig {
            n_actions: self.n_actions,
            gamma: self.gamma,
            epsilon_final: self.epsilon_final,
            n_episodes: self.episodes,
            training_onset: self.training_onset,
            target_sync: self.target_sync,
            minibatch: self.minibatch,
            learning_rate: self.learning_rate,
            replay_capacity: self.replay_capacity,
            huber_delta: self.huber_delta,
            rms_rho: self.rms_rho,
            rms_epsilon: self.rms_epsilon,
            seed: self.seed,
        }
    }

    pub fn env(&self, n_actions: usize) -> Result<EnvConfig, HarnessError> {
        let angles = action_angles(n_actions).map_err(|e| HarnessError::Config(e.to_string()))?;
        let tolerance = self
            .tolerance
            .unwrap_or_else(|| smallest_gap(&angles) / 2.0);
        let cfg = EnvConfig {
            angles,
            tolerance,
            workspace: Default::default(),
            noise_sigma: self.noise_sigma,
            object_length: self.length_min..self.length_max,
            aspect: self.aspect_min..self.aspect_max,
            crop_margin: self.crop_margin,
            detector_jitter: self.detector_jitter,
            seed: self.seed,
        };
        cfg.validate()
            .map_err(|e| HarnessError::Config(e.to_string()))?;
        Ok(cfg)
    }
}
