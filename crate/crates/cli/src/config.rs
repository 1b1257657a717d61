//! Flat dotted-key run configuration.
//!
//! A config file is TOML whose keys name fields directly, for example
//! `gen.n = 128` or `stage2.lr = 1e-4`. Tables and dotted keys are
//! equivalent. Every unknown key or badly typed value is collected so that a
//! single run reports all of them.

use std::path::Path;

use deepbiht::datagen::NoiseModel;
use deepbiht::eval::ExperimentConfig;
use deepbiht::training::TrainingConfig;
use toml::Value;

/// Sparsity levels of the sweep when the config names none.
pub const DEFAULT_K_VALUES: [usize; 8] = [2, 4, 6, 8, 10, 12, 14, 16];

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub experiment: ExperimentConfig,
    pub k_values: Vec<usize>,
}

#[derive(Debug)]
pub enum ConfigError {
    Read(std::io::Error),
    Invalid(Vec<String>),
}

impl RunConfig {
    pub fn preset(name: &str) -> Option<Self> {
        let experiment = match name {
            "paper" => ExperimentConfig::paper(),
            "fast" => ExperimentConfig::fast(),
            _ => return None,
        };
        Some(Self { experiment, k_values: DEFAULT_K_VALUES.to_vec() })
    }

    pub fn load(path: Option<&Path>) -> Result<Self, ConfigError> {
        match path {
            None => Ok(Self::preset("paper").unwrap()),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(ConfigError::Read)?;
                Self::parse(&text).map_err(ConfigError::Invalid)
            }
        }
    }

    pub fn parse(text: &str) -> Result<Self, Vec<String>> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| vec![e.to_string()])?;
        let mut entries = Vec::new();
        flatten("", &Value::Table(table), &mut entries);

        let mut problems = Vec::new();
        let preset = entries.iter().find(|(k, _)| k == "preset").map(|(_, v)| v);
        let mut cfg = match preset {
            None => Self::preset("paper").unwrap(),
            Some(Value::String(name)) => match Self::preset(name) {
                Some(cfg) => cfg,
                None => {
                    problems.push(format!("preset: unknown preset {name:?} (expected \"paper\" or \"fast\")"));
                    Self::preset("paper").unwrap()
                }
            },
            Some(other) => {
                problems.push(format!("preset: expected a string, found {other}"));
                Self::preset("paper").unwrap()
            }
        };
        let mut noise = NoiseSpec::from(&cfg.experiment.gen.noise);
        for (key, value) in entries.iter().filter(|(k, _)| k != "preset") {
            if let Err(msg) = cfg.apply(key, value, &mut noise) {
                problems.push(format!("{key}: {msg}"));
            }
        }
        match noise.build() {
            Ok(model) => cfg.experiment.gen.noise = model,
            Err(msg) => problems.push(format!("gen.noise: {msg}")),
        }
        if let Err(e) = cfg.experiment.validate() {
            problems.push(e.to_string());
        }
        if problems.is_empty() {
            Ok(cfg)
        } else {
            Err(problems)
        }
    }

    fn apply(&mut self, key: &str, v: &Value, noise: &mut NoiseSpec) -> Result<(), String> {
        let e = &mut self.experiment;
        let (section, field) = key.split_once('.').unwrap_or(("", key));
        match section {
            "gen" => match field {
                "n" => e.gen.n = usize_of(v)?,
                "m" => e.gen.m = usize_of(v)?,
                "sparsity" => e.gen.sparsity = usize_of(v)?,
                "samples" => e.gen.samples = usize_of(v)?,
                "seed" => e.gen.seed = u64_of(v)?,
                "normalize_signals" => e.gen.normalize_signals = bool_of(v)?,
                "threshold" => e.gen.threshold = f64_list(v)?,
                "noise.kind" => noise.kind = Some(str_of(v)?.to_string()),
                "noise.variance" => noise.variance = Some(f64_of(v)?),
                "noise.covariance" => noise.covariance = Some(f64_list(v)?),
                _ => return Err("unknown key".into()),
            },
            "stage1" => apply_training(&mut e.stage1, field, v)?,
            "stage2" => apply_training(&mut e.stage2, field, v)?,
            "experiment" => match field {
                "train_samples" => e.train_samples = usize_of(v)?,
                "test_samples" => e.test_samples = usize_of(v)?,
                "realizations" => e.realizations = usize_of(v)?,
                "seed" => e.seed = u64_of(v)?,
                _ => return Err("unknown key".into()),
            },
            "biht" => match field {
                "step_size" => e.biht.step_size = f64_of(v)?,
                "normalize_each_iteration" => e.biht.normalize_each_iteration = bool_of(v)?,
                _ => return Err("unknown key".into()),
            },
            "sweep" => match field {
                "k_values" => {
                    self.k_values = match v {
                        Value::Array(items) => items.iter().map(usize_of).collect::<Result<_, _>>()?,
                        other => return Err(format!("expected an array of integers, found {other}")),
                    }
                }
                _ => return Err("unknown key".into()),
            },
            _ => return Err("unknown key".into()),
        }
        Ok(())
    }

    /// Applies a `--seed` override to every seeded component.
    pub fn override_seed(&mut self, seed: u64) {
        let e = &mut self.experiment;
        e.gen.seed = seed;
        e.stage1.seed = seed;
        e.stage2.seed = seed;
        e.seed = seed;
    }

    pub fn force_deterministic(&mut self) {
        self.experiment.stage1.deterministic_reduction = true;
        self.experiment.stage2.deterministic_reduction = true;
    }
}

fn apply_training(t: &mut TrainingConfig, field: &str, v: &Value) -> Result<(), String> {
    match field {
        "epochs" => t.epochs = usize_of(v)?,
        "batch_size" => t.batch_size = usize_of(v)?,
        "lr" => t.adam.lr = f64_of(v)?,
        "beta1" => t.adam.beta1 = f64_of(v)?,
        "beta2" => t.adam.beta2 = f64_of(v)?,
        "epsilon" => t.adam.epsilon = f64_of(v)?,
        "shared_alpha" => t.shared_alpha = Some(f64_of(v)?),
        "depth" => t.depth = usize_of(v)?,
        "reduced_depth" => t.reduced_depth = usize_of(v)?,
        "lambda" => t.lambda = f64_of(v)?,
        "sparsity" => t.sparsity = Some(usize_of(v)?),
        "ste_clip" => {
            t.ste_clip = match v {
                Value::String(s) if s == "none" || s == "inf" => None,
                other => Some(f64_of(other)?),
            }
        }
        "normalize_per_layer" => t.normalize_per_layer = bool_of(v)?,
        "deterministic_reduction" => t.deterministic_reduction = bool_of(v)?,
        "seed" => t.seed = u64_of(v)?,
        _ => return Err("unknown key".into()),
    }
    Ok(())
}

#[derive(Debug, Default)]
struct NoiseSpec {
    kind: Option<String>,
    variance: Option<f64>,
    covariance: Option<Vec<f64>>,
}

impl NoiseSpec {
    fn from(model: &NoiseModel) -> Self {
        match model {
            NoiseModel::None => Self { kind: Some("none".into()), ..Self::default() },
            NoiseModel::Iid { variance } => Self { kind: Some("iid".into()), variance: Some(*variance), covariance: None },
            NoiseModel::Full { covariance } => {
                Self { kind: Some("full".into()), variance: None, covariance: Some(covariance.clone()) }
            }
        }
    }

    fn build(self) -> Result<NoiseModel, String> {
        match self.kind.as_deref() {
            Some("none") => Ok(NoiseModel::None),
            Some("iid") => Ok(NoiseModel::Iid { variance: self.variance.unwrap_or(1.0) }),
            Some("full") => self
                .covariance
                .map(|covariance| NoiseModel::Full { covariance })
                .ok_or_else(|| "kind \"full\" needs gen.noise.covariance".to_string()),
            other => Err(format!("unknown kind {other:?} (expected none, iid or full)")),
        }
    }
}

fn flatten(prefix: &str, value: &Value, out: &mut Vec<(String, Value)>) {
    match value {
        Value::Table(t) => {
            for (k, v) in t {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten(&key, v, out);
            }
        }
        other => out.push((prefix.to_string(), other.clone())),
    }
}

fn usize_of(v: &Value) -> Result<usize, String> {
    match v {
        Value::Integer(i) => usize::try_from(*i).map_err(|_| format!("expected a non-negative integer, found {i}")),
        other => Err(format!("expected an integer, found {other}")),
    }
}

fn u64_of(v: &Value) -> Result<u64, String> {
    usize_of(v).map(|x| x as u64)
}

fn f64_of(v: &Value) -> Result<f64, String> {
    match v {
        Value::Float(f) => Ok(*f),
        Value::Integer(i) => Ok(*i as f64),
        other => Err(format!("expected a number, found {other}")),
    }
}

fn bool_of(v: &Value) -> Result<bool, String> {
    v.as_bool().ok_or_else(|| format!("expected true or false, found {v}"))
}

fn str_of(v: &Value) -> Result<&str, String> {
    v.as_str().ok_or_else(|| format!("expected a string, found {v}"))
}

fn f64_list(v: &Value) -> Result<Vec<f64>, String> {
    match v {
        Value::Array(items) => items.iter().map(f64_of).collect(),
        other => Err(format!("expected an array of numbers, found {other}")),
    }
}
