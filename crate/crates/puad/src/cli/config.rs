//! Flat `key = value` run configuration with `--set` overrides.
//!
//! One file drives a whole run; unknown keys are rejected so typos fail
//! fast, and the fully resolved key set (defaults included) goes into
//! the run manifest for diffing.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::data::{GenConfig, ToyGeometry};
use crate::error::{Error, Result};
use crate::losses::LossKind;
use crate::models::ModelSpec;
use crate::trainer::TrainConfig;

/// Every documented key, with its default value.
const KEYS: &[(&str, &str)] = &[
    ("seed", "0"),
    ("mode", "toy2d"),
    // split counts and caps
    ("n_unlabeled_normal", "900"),
    ("n_unlabeled_seen", "100"),
    ("n_labeled_seen", "100"),
    ("test_normal_cap", "200"),
    ("test_seen_cap", "100"),
    ("test_unseen_cap", "100"),
    ("val_fraction", "0.1"),
    // toy geometry
    ("toy_normal_center_a", "-2,0"),
    ("toy_normal_center_b", "2,0"),
    ("toy_normal_sigma", "0.5"),
    ("toy_seen_center", "0,3"),
    ("toy_seen_sigma", "0.4"),
    ("toy_unseen_center", "0,-3"),
    ("toy_unseen_sigma", "0.4"),
    // idx ingestion
    ("idx_images", ""),
    ("idx_labels", ""),
    ("normal_class", "1"),
    ("unseen_class", "0"),
    ("downsample_factor", "1"),
    // model architecture
    ("hidden", "32"),
    ("latent_dim", "2"),
    ("noise_sigma", "0"),
    // training
    ("loss", "pu_bce"),
    ("alpha", "0.1"),
    ("learning_rate", "1e-4"),
    ("batch_size", "128"),
    ("max_epochs", "200"),
    ("weight_decay", "1e-3"),
    ("patience", "20"),
    ("pretrain_epochs", "50"),
    // sweeps
    ("sweep_alphas", "0.01,0.05,0.1,0.3,0.5"),
    ("sweep_counts", "50,100,250"),
    ("sweep_seeds", "5"),
    ("workers", "1"),
];

#[derive(Debug, Clone, PartialEq)]
pub enum DataMode {
    Toy2d,
    Idx {
        images: PathBuf,
        labels: PathBuf,
        normal_class: u8,
        unseen_class: u8,
        downsample_factor: usize,
    },
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub seed: u64,
    pub mode: DataMode,
    pub gen: GenConfig,
    pub model: ModelSpec,
    pub train: TrainConfig,
    pub sweep_alphas: Vec<f64>,
    pub sweep_counts: Vec<usize>,
    pub sweep_seeds: u64,
    pub workers: usize,
    resolved: Vec<(String, String)>,
}

fn parse_pair(line: &str, lineno: usize) -> Result<(String, String)> {
    let (k, v) = line.split_once('=').ok_or_else(|| {
        Error::Config(format!(
            "line {lineno}: expected `key = value`, got {line:?}"
        ))
    })?;
    Ok((k.trim().to_string(), v.trim().to_string()))
}

struct Lookup(BTreeMap<String, String>);

impl Lookup {
    fn get(&self, key: &str) -> &str {
        self.0
            .get(key)
            .map(String::as_str)
            .expect("key validated against KEYS")
    }

    fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        self.get(key)
            .parse::<T>()
            .map_err(|_| Error::Config(format!("bad value for key {key}: {:?}", self.get(key))))
    }

    fn parse_list<T: std::str::FromStr>(&self, key: &str) -> Result<Vec<T>> {
        let raw = self.get(key);
        if raw.is_empty() {
            return Ok(Vec::new());
        }
        raw.split(',')
            .map(|v| {
                v.trim()
                    .parse::<T>()
                    .map_err(|_| Error::Config(format!("bad value in {key}: {v:?}")))
            })
            .collect()
    }

    fn parse_point(&self, key: &str) -> Result<[f64; 2]> {
        let parts: Vec<f64> = self.parse_list(key)?;
        if parts.len() != 2 {
            return Err(Error::Config(format!("key {key} must be `x,y`")));
        }
        Ok([parts[0], parts[1]])
    }
}

impl RunConfig {
    pub fn load(path: &Path, overrides: &[(String, String)]) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_text(&text, overrides)
    }

    pub fn from_text(text: &str, overrides: &[(String, String)]) -> Result<Self> {
        let mut map: BTreeMap<String, String> = KEYS
            .iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect();
        let mut apply = |key: String, value: String| -> Result<()> {
            if !map.contains_key(&key) {
                return Err(Error::Config(format!("unknown config key {key:?}")));
            }
            map.insert(key, value);
            Ok(())
        };
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = parse_pair(line, lineno + 1)?;
            apply(k, v)?;
        }
        for (k, v) in overrides {
            apply(k.clone(), v.clone())?;
        }
        let look = Lookup(map.clone());

        let seed: u64 = look.parse("seed")?;
        let mode = match look.get("mode") {
            "toy2d" => DataMode::Toy2d,
            "idx" => {
                for key in ["idx_images", "idx_labels"] {
                    if look.get(key).is_empty() {
                        return Err(Error::Config(format!("mode=idx requires key {key}")));
                    }
                }
                DataMode::Idx {
                    images: PathBuf::from(look.get("idx_images")),
                    labels: PathBuf::from(look.get("idx_labels")),
                    normal_class: look.parse("normal_class")?,
                    unseen_class: look.parse("unseen_class")?,
                    downsample_factor: look.parse("downsample_factor")?,
                }
            }
            other => {
                return Err(Error::Config(format!(
                    "mode must be toy2d or idx, got {other:?}"
                )))
            }
        };

        let toy = ToyGeometry {
            normal_centers: vec![
                look.parse_point("toy_normal_center_a")?,
                look.parse_point("toy_normal_center_b")?,
            ],
            normal_sigma: look.parse("toy_normal_sigma")?,
            seen_center: look.parse_point("toy_seen_center")?,
            seen_sigma: look.parse("toy_seen_sigma")?,
            unseen_center: look.parse_point("toy_unseen_center")?,
            unseen_sigma: look.parse("toy_unseen_sigma")?,
        };
        let gen = GenConfig {
            seed,
            n_unlabeled_normal: look.parse("n_unlabeled_normal")?,
            n_unlabeled_seen: look.parse("n_unlabeled_seen")?,
            n_labeled_seen: look.parse("n_labeled_seen")?,
            test_normal_cap: look.parse("test_normal_cap")?,
            test_seen_cap: look.parse("test_seen_cap")?,
            test_unseen_cap: look.parse("test_unseen_cap")?,
            val_fraction: look.parse("val_fraction")?,
            toy,
        };
        gen.validate()?;

        let model = ModelSpec {
            hidden: look.parse_list("hidden")?,
            latent_dim: look.parse("latent_dim")?,
            noise_sigma: look.parse("noise_sigma")?,
        };

        let loss_kind = LossKind::parse(look.get("loss"), look.parse("alpha")?)?;
        let train = TrainConfig {
            loss_kind,
            learning_rate: look.parse("learning_rate")?,
            batch_size: look.parse("batch_size")?,
            max_epochs: look.parse("max_epochs")?,
            weight_decay: look.parse("weight_decay")?,
            patience: look.parse("patience")?,
            pretrain_epochs: look.parse("pretrain_epochs")?,
            seed,
        };
        train.validate()?;

        let sweep_alphas: Vec<f64> = look.parse_list("sweep_alphas")?;
        let sweep_counts: Vec<usize> = look.parse_list("sweep_counts")?;
        let sweep_seeds: u64 = look.parse("sweep_seeds")?;
        let workers: usize = look.parse("workers")?;

        let resolved: Vec<(String, String)> = map.into_iter().collect();
        Ok(RunConfig {
            seed,
            mode,
            gen,
            model,
            train,
            sweep_alphas,
            sweep_counts,
            sweep_seeds,
            workers,
            resolved,
        })
    }

    /// Effective worker count; `PUAD_WORKERS` overrides the config key.
    pub fn effective_workers(&self) -> usize {
        match std::env::var("PUAD_WORKERS") {
            Ok(v) => v.parse().unwrap_or(self.workers).max(1),
            Err(_) => self.workers.max(1),
        }
    }

    /// All documented keys with their effective values, sorted.
    pub fn resolved(&self) -> &[(String, String)] {
        &self.resolved
    }
}
