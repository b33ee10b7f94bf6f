//! Run configuration: defaults, a flat `key = value` file and environment
//! overrides.

use std::collections::BTreeMap;
use std::path::Path;

use preshape_align::search::RefineConfig;
use preshape_align::RegistrationConfig;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Prefix of environment variables that override config keys, e.g.
/// `PRESHAPE_TARGET_COUNT=2000`.
pub const ENV_PREFIX: &str = "PRESHAPE_";

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("{origin}: unknown key {key:?}")]
    UnknownKey { origin: String, key: String },
    #[error("{origin}: invalid value {value:?} for {key}")]
    BadValue { origin: String, key: String, value: String },
    #[error("{origin}: line {line}: expected key = value")]
    Syntax { origin: String, line: usize },
    #[error("cannot read config {path}: {message}")]
    Read { path: String, message: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub target_count: usize,
    pub rotation_steps: usize,
    pub translation_steps: usize,
    pub azimuth_bins: usize,
    pub elevation_bins: usize,
    pub feature_fraction: f64,
    pub knn_k: usize,
    pub pca_k: usize,
    pub use_features: bool,
    /// Grid candidates refined locally after the search; 0 disables refinement.
    pub refine_candidates: usize,
    pub align_sample_centroids: bool,
    pub worker_count: usize,
    pub seed: u64,
    pub enable_mse_condition: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        let reg = RegistrationConfig::default();
        Self {
            target_count: reg.target_count,
            rotation_steps: reg.rotation_steps,
            translation_steps: reg.translation_steps,
            azimuth_bins: reg.azimuth_bins,
            elevation_bins: reg.elevation_bins,
            feature_fraction: reg.feature_fraction,
            knn_k: reg.knn_k,
            pca_k: reg.pca_k,
            use_features: reg.use_features,
            refine_candidates: reg.refine.map_or(0, |r| r.candidates),
            align_sample_centroids: reg.align_sample_centroids,
            worker_count: std::thread::available_parallelism().map_or(1, |n| n.get()),
            seed: 0,
            enable_mse_condition: false,
        }
    }
}

fn parse<T: std::str::FromStr>(origin: &str, key: &str, value: &str) -> Result<T, ConfigError> {
    value.parse().map_err(|_| ConfigError::BadValue {
        origin: origin.to_string(),
        key: key.to_string(),
        value: value.to_string(),
    })
}

impl RunConfig {
    pub const KEYS: [&'static str; 14] = [
        "target_count",
        "rotation_steps",
        "translation_steps",
        "azimuth_bins",
        "elevation_bins",
        "feature_fraction",
        "knn_k",
        "pca_k",
        "use_features",
        "refine_candidates",
        "align_sample_centroids",
        "worker_count",
        "seed",
        "enable_mse_condition",
    ];

    /// Sets one key; `origin` names the source for error messages.
    pub fn set(&mut self, key: &str, value: &str, origin: &str) -> Result<(), ConfigError> {
        let value = value.trim();
        match key {
            "target_count" => self.target_count = parse(origin, key, value)?,
            "rotation_steps" => self.rotation_steps = parse(origin, key, value)?,
            "translation_steps" => self.translation_steps = parse(origin, key, value)?,
            "azimuth_bins" => self.azimuth_bins = parse(origin, key, value)?,
            "elevation_bins" => self.elevation_bins = parse(origin, key, value)?,
            "feature_fraction" => self.feature_fraction = parse(origin, key, value)?,
            "knn_k" => self.knn_k = parse(origin, key, value)?,
            "pca_k" => self.pca_k = parse(origin, key, value)?,
            "use_features" => self.use_features = parse(origin, key, value)?,
            "refine_candidates" => self.refine_candidates = parse(origin, key, value)?,
            "align_sample_centroids" => self.align_sample_centroids = parse(origin, key, value)?,
            "worker_count" => self.worker_count = parse(origin, key, value)?,
            "seed" => self.seed = parse(origin, key, value)?,
            "enable_mse_condition" => self.enable_mse_condition = parse(origin, key, value)?,
            _ => {
                return Err(ConfigError::UnknownKey {
                    origin: origin.to_string(),
                    key: key.to_string(),
                })
            }
        }
        Ok(())
    }

    /// Applies a flat `key = value` document. Blank lines and `#` comments
    /// are skipped.
    pub fn apply_text(&mut self, text: &str, origin: &str) -> Result<(), ConfigError> {
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                origin: origin.to_string(),
                line: idx + 1,
            })?;
            self.set(key.trim(), value, &format!("{origin}:{}", idx + 1))?;
        }
        Ok(())
    }

    /// Applies every `PRESHAPE_<KEY>` variable among `vars`.
    pub fn apply_env<I: IntoIterator<Item = (String, String)>>(&mut self, vars: I) -> Result<(), ConfigError> {
        let vars: BTreeMap<String, String> = vars.into_iter().collect();
        for key in Self::KEYS {
            let name = format!("{ENV_PREFIX}{}", key.to_ascii_uppercase());
            if let Some(value) = vars.get(&name) {
                self.set(key, value, &name)?;
            }
        }
        Ok(())
    }

    /// Defaults, then the optional file, then the environment.
    pub fn load<I: IntoIterator<Item = (String, String)>>(file: Option<&Path>, env: I) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        if let Some(path) = file {
            let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Read {
                path: path.display().to_string(),
                message: e.to_string(),
            })?;
            cfg.apply_text(&text, &path.display().to_string())?;
        }
        cfg.apply_env(env)?;
        Ok(cfg)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for key in Self::KEYS {
            let value = match key {
                "target_count" => self.target_count.to_string(),
                "rotation_steps" => self.rotation_steps.to_string(),
                "translation_steps" => self.translation_steps.to_string(),
                "azimuth_bins" => self.azimuth_bins.to_string(),
                "elevation_bins" => self.elevation_bins.to_string(),
                "feature_fraction" => self.feature_fraction.to_string(),
                "knn_k" => self.knn_k.to_string(),
                "pca_k" => self.pca_k.to_string(),
                "use_features" => self.use_features.to_string(),
                "refine_candidates" => self.refine_candidates.to_string(),
                "align_sample_centroids" => self.align_sample_centroids.to_string(),
                "worker_count" => self.worker_count.to_string(),
                "seed" => self.seed.to_string(),
                "enable_mse_condition" => self.enable_mse_condition.to_string(),
                _ => unreachable!(),
            };
            out.push_str(&format!("{key} = {value}\n"));
        }
        out
    }

    /// The pipeline settings. Threading is left to the caller's pool.
    pub fn registration(&self) -> RegistrationConfig {
        RegistrationConfig {
            target_count: self.target_count,
            knn_k: self.knn_k,
            rotation_steps: self.rotation_steps,
            translation_steps: self.translation_steps,
            azimuth_bins: self.azimuth_bins,
            elevation_bins: self.elevation_bins,
            feature_fraction: self.feature_fraction,
            pca_k: self.pca_k,
            use_features: self.use_features,
            align_sample_centroids: self.align_sample_centroids,
            refine: (self.refine_candidates > 0).then(|| RefineConfig {
                candidates: self.refine_candidates,
                ..RefineConfig::default()
            }),
            workers: None,
            ..RegistrationConfig::default()
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.worker_count == 0 {
            return Err(ConfigError::Invalid("worker_count must be positive".into()));
        }
        self.registration().validate().map_err(|e| ConfigError::Invalid(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_the_method() {
        let cfg = RunConfig::default();
        assert_eq!(cfg.target_count, 3000);
        assert_eq!(cfg.rotation_steps, 12);
        assert_eq!(cfg.translation_steps, 5);
        assert_eq!((cfg.azimuth_bins, cfg.elevation_bins), (12, 6));
        assert_eq!(cfg.feature_fraction, 0.15);
        assert_eq!(cfg.knn_k, 12);
        assert!(cfg.worker_count >= 1);
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn file_then_env() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        std::fs::write(&path, "# tuned\ntarget_count = 2000\nuse_features=false\n\nseed = 9 # trailing\n").unwrap();
        let env = vec![
            ("PRESHAPE_TARGET_COUNT".to_string(), "1500".to_string()),
            ("UNRELATED".to_string(), "x".to_string()),
        ];
        let cfg = RunConfig::load(Some(&path), env).unwrap();
        assert_eq!(cfg.target_count, 1500);
        assert!(!cfg.use_features);
        assert_eq!(cfg.seed, 9);
    }

    #[test]
    fn text_round_trip() {
        let cfg = RunConfig {
            feature_fraction: 0.1 + 0.2,
            seed: u64::MAX,
            ..RunConfig::default()
        };
        let mut back = RunConfig::default();
        back.apply_text(&cfg.to_text(), "mem").unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn rejects_bad_input() {
        let mut cfg = RunConfig::default();
        assert!(matches!(cfg.apply_text("colour = red", "f"), Err(ConfigError::UnknownKey { .. })));
        assert!(matches!(cfg.apply_text("knn_k = many", "f"), Err(ConfigError::BadValue { .. })));
        assert!(matches!(cfg.apply_text("knn_k 12", "f"), Err(ConfigError::Syntax { line: 1, .. })));
        assert!(RunConfig { translation_steps: 4, ..RunConfig::default() }.validate().is_err());
        assert!(RunConfig { worker_count: 0, ..RunConfig::default() }.validate().is_err());
    }

    #[test]
    fn refinement_toggle() {
        assert!(RunConfig { refine_candidates: 0, ..RunConfig::default() }.registration().refine.is_none());
        assert_eq!(RunConfig { refine_candidates: 3, ..RunConfig::default() }.registration().refine.unwrap().candidates, 3);
    }
}
