//! Strict JSON experiment configuration.
//!
//! A config file is a flat JSON object. Unknown keys are fatal, and every key has
//! one accepted type. Command-line flags override file values key by key.

use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::exact::DEFAULT_ENUMERATION_CAP;
use crate::smc::Resampler;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("missing required field `{0}`")]
    MissingField(String),
    #[error("config key `{key}` must be {expected}")]
    TypeMismatch { key: String, expected: String },
    #[error("cannot read config {path}: {message}")]
    Io { path: String, message: String },
    #[error("config is not a JSON object: {0}")]
    Parse(String),
    #[error("invalid value for `{key}`: {message}")]
    Invalid { key: String, message: String },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CriterionChoice {
    Cv2,
    Entropy,
    Fixed,
}

/// Resolved experiment settings. `None` means "not given"; subcommands decide
/// which of those are required.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentConfig {
    /// Hashed through the model file's contents, not its path.
    #[serde(skip)]
    pub model: Option<PathBuf>,
    pub criterion: CriterionChoice,
    pub threshold: Option<Vec<f64>>,
    pub threshold_range: Option<(f64, f64)>,
    pub schedule: Option<Vec<usize>>,
    pub n: usize,
    pub n_list: Vec<usize>,
    pub replicates: usize,
    pub seed: Option<u64>,
    pub blocks: Option<usize>,
    pub block: Option<usize>,
    pub epsilons: Vec<f64>,
    /// Not part of the hash: the same experiment written elsewhere is the same experiment.
    #[serde(skip)]
    pub out: PathBuf,
    pub resampler: Resampler,
    pub enum_cap: u64,
    pub f: Option<Vec<f64>>,
    pub m_list: Vec<u32>,
    pub sigma1_override: Option<f64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            model: None,
            criterion: CriterionChoice::Cv2,
            threshold: None,
            threshold_range: None,
            schedule: None,
            n: 1024,
            n_list: vec![64, 256, 1024, 4096],
            replicates: 1000,
            seed: None,
            blocks: None,
            block: None,
            epsilons: (1..=10).map(|i| f64::from(i) * 0.02).collect(),
            out: PathBuf::from("out"),
            resampler: Resampler::Select,
            enum_cap: DEFAULT_ENUMERATION_CAP,
            f: None,
            m_list: vec![1, 2, 4],
            sigma1_override: None,
        }
    }
}

/// Keys accepted in a config file. `N` is accepted as a spelling of `n`.
pub const KEYS: &[&str] = &[
    "model",
    "criterion",
    "threshold",
    "threshold_range",
    "schedule",
    "n",
    "N",
    "n_list",
    "replicates",
    "seed",
    "blocks",
    "block",
    "epsilons",
    "out",
    "resampler",
    "enum_cap",
    "f",
    "m_list",
    "sigma1_override",
];

fn mismatch(key: &str, expected: &str) -> ConfigError {
    ConfigError::TypeMismatch {
        key: key.to_string(),
        expected: expected.to_string(),
    }
}

fn as_u64(key: &str, v: &Value) -> Result<u64, ConfigError> {
    v.as_u64()
        .ok_or_else(|| mismatch(key, "a non-negative integer"))
}

fn as_usize(key: &str, v: &Value) -> Result<usize, ConfigError> {
    Ok(as_u64(key, v)? as usize)
}

fn as_f64(key: &str, v: &Value) -> Result<f64, ConfigError> {
    v.as_f64().ok_or_else(|| mismatch(key, "a number"))
}

fn as_str<'a>(key: &str, v: &'a Value) -> Result<&'a str, ConfigError> {
    v.as_str().ok_or_else(|| mismatch(key, "a string"))
}

fn as_array<'a>(key: &str, v: &'a Value, expected: &str) -> Result<&'a Vec<Value>, ConfigError> {
    let arr = v.as_array().ok_or_else(|| mismatch(key, expected))?;
    if arr.is_empty() {
        return Err(ConfigError::Invalid {
            key: key.to_string(),
            message: "list must not be empty".into(),
        });
    }
    Ok(arr)
}

fn f64_list(key: &str, v: &Value) -> Result<Vec<f64>, ConfigError> {
    as_array(key, v, "a list of numbers")?
        .iter()
        .map(|x| x.as_f64().ok_or_else(|| mismatch(key, "a list of numbers")))
        .collect()
}

fn usize_list(key: &str, v: &Value) -> Result<Vec<usize>, ConfigError> {
    as_array(key, v, "a list of non-negative integers")?
        .iter()
        .map(|x| {
            x.as_u64()
                .map(|u| u as usize)
                .ok_or_else(|| mismatch(key, "a list of non-negative integers"))
        })
        .collect()
}

pub fn parse_criterion(key: &str, text: &str) -> Result<CriterionChoice, ConfigError> {
    match text {
        "cv2" => Ok(CriterionChoice::Cv2),
        "entropy" => Ok(CriterionChoice::Entropy),
        "fixed" => Ok(CriterionChoice::Fixed),
        _ => Err(mismatch(key, "one of cv2, entropy, fixed")),
    }
}

pub fn parse_resampler(key: &str, text: &str) -> Result<Resampler, ConfigError> {
    match text {
        "select" => Ok(Resampler::Select),
        "multinomial" => Ok(Resampler::Multinomial),
        _ => Err(mismatch(key, "one of select, multinomial")),
    }
}

impl ExperimentConfig {
    /// Applies the entries of a JSON object. Relative `model` and `out` paths are
    /// taken relative to `base`.
    pub fn apply_json(&mut self, map: &Map<String, Value>, base: &Path) -> Result<(), ConfigError> {
        if let Some(key) = map.keys().find(|k| !KEYS.contains(&k.as_str())) {
            return Err(ConfigError::UnknownKey(key.clone()));
        }
        if map.contains_key("n") && map.contains_key("N") {
            return Err(ConfigError::Invalid {
                key: "N".into(),
                message: "`n` and `N` are the same setting; give one".into(),
            });
        }
        for (key, v) in map {
            let k = key.as_str();
            match k {
                "model" => self.model = Some(base.join(as_str(k, v)?)),
                "criterion" => self.criterion = parse_criterion(k, as_str(k, v)?)?,
                "threshold" => {
                    self.threshold = Some(if v.is_array() {
                        f64_list(k, v)?
                    } else {
                        vec![v
                            .as_f64()
                            .ok_or_else(|| mismatch(k, "a number or a list of numbers"))?]
                    })
                }
                "threshold_range" => {
                    let pair = f64_list(k, v)?;
                    if pair.len() != 2 {
                        return Err(mismatch(k, "a pair [lower, upper]"));
                    }
                    self.threshold_range = Some((pair[0], pair[1]));
                }
                "schedule" => self.schedule = Some(usize_list(k, v)?),
                "n" | "N" => self.n = as_usize(k, v)?,
                "n_list" => self.n_list = usize_list(k, v)?,
                "replicates" => self.replicates = as_usize(k, v)?,
                "seed" => self.seed = Some(as_u64(k, v)?),
                "blocks" => self.blocks = Some(as_usize(k, v)?),
                "block" => self.block = Some(as_usize(k, v)?),
                "epsilons" => self.epsilons = f64_list(k, v)?,
                "out" => self.out = base.join(as_str(k, v)?),
                "resampler" => self.resampler = parse_resampler(k, as_str(k, v)?)?,
                "enum_cap" => self.enum_cap = as_u64(k, v)?,
                "f" => self.f = Some(f64_list(k, v)?),
                "m_list" => self.m_list = usize_list(k, v)?.into_iter().map(|m| m as u32).collect(),
                "sigma1_override" => self.sigma1_override = Some(as_f64(k, v)?),
                _ => unreachable!("key list checked above"),
            }
        }
        Ok(())
    }

    pub fn from_json_str(text: &str, base: &Path) -> Result<Self, ConfigError> {
        let value: Value =
            serde_json::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        let map = value
            .as_object()
            .ok_or_else(|| ConfigError::Parse("top level must be an object".into()))?;
        let mut config = Self::default();
        config.apply_json(map, base)?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_json_str(&text, base)
    }

    pub fn require_seed(&self) -> Result<u64, ConfigError> {
        self.seed
            .ok_or_else(|| ConfigError::MissingField("seed".into()))
    }

    pub fn require_model(&self) -> Result<&Path, ConfigError> {
        self.model
            .as_deref()
            .ok_or_else(|| ConfigError::MissingField("model".into()))
    }

    /// SHA-256 over the resolved settings followed by the model file bytes, hex encoded.
    pub fn hash(&self, model_bytes: &[u8]) -> String {
        let canonical = serde_json::to_vec(self).expect("config serializes");
        let mut hasher = Sha256::new();
        hasher.update(&canonical);
        hasher.update(model_bytes);
        hex::encode(hasher.finalize())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<ExperimentConfig, ConfigError> {
        ExperimentConfig::from_json_str(text, Path::new("/base"))
    }

    #[test]
    fn minimal_file_gets_defaults() {
        let c = parse(r#"{"model": "m.json", "seed": 3}"#).unwrap();
        assert_eq!(c.model, Some(PathBuf::from("/base/m.json")));
        assert_eq!(c.seed, Some(3));
        assert_eq!(c.resampler, Resampler::Select);
        assert_eq!(c.enum_cap, 1_000_000);
    }

    #[test]
    fn unknown_key_is_named() {
        assert_eq!(
            parse(r#"{"thresold": 0.3}"#).unwrap_err(),
            ConfigError::UnknownKey("thresold".into())
        );
    }

    #[test]
    fn type_mismatch_names_the_key() {
        assert_eq!(
            parse(r#"{"replicates": "many"}"#).unwrap_err(),
            mismatch("replicates", "a non-negative integer")
        );
        assert!(matches!(
            parse(r#"{"threshold_range": [1.0]}"#).unwrap_err(),
            ConfigError::TypeMismatch { .. }
        ));
    }

    #[test]
    fn capital_n_is_accepted() {
        assert_eq!(parse(r#"{"N": 128}"#).unwrap().n, 128);
        assert!(parse(r#"{"N": 128, "n": 4}"#).is_err());
    }

    #[test]
    fn scalar_or_list_threshold() {
        assert_eq!(
            parse(r#"{"threshold": 0.3}"#).unwrap().threshold,
            Some(vec![0.3])
        );
        assert_eq!(
            parse(r#"{"threshold": [0.3, 0.4]}"#).unwrap().threshold,
            Some(vec![0.3, 0.4])
        );
    }

    #[test]
    fn hash_changes_with_content() {
        let a = parse(r#"{"seed": 1}"#).unwrap();
        let b = parse(r#"{"seed": 2}"#).unwrap();
        assert_eq!(a.hash(b"m"), a.clone().hash(b"m"));
        assert_ne!(a.hash(b"m"), b.hash(b"m"));
        assert_ne!(a.hash(b"m"), a.hash(b"other model"));
        assert_eq!(a.hash(b"").len(), 64);
        let mut moved = a.clone();
        moved.out = PathBuf::from("/elsewhere");
        assert_eq!(a.hash(b"m"), moved.hash(b"m"));
    }
}
