use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::ProtocolError;
use crate::accounting::Budget;
use crate::privacy::PrivacyParams;
use crate::tensor::{load_idx, synth_blobs, Batch};

fn default_cadence() -> u64 {
    10
}

fn default_eval_every() -> u64 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicClipping {
    pub enabled: bool,
    /// One histogram round every `cadence` iterations, starting with the first.
    #[serde(default = "default_cadence")]
    pub cadence: u64,
}

impl Default for DynamicClipping {
    fn default() -> Self {
        Self {
            enabled: false,
            cadence: default_cadence(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub layer_dims: Vec<usize>,
    pub init_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StopConditions {
    pub max_iterations: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetSource {
    Synthetic {
        num_classes: usize,
        dim: usize,
        per_class: usize,
        spread: f64,
        seed: u64,
    },
    Idx {
        images: PathBuf,
        labels: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Shard {
    pub index: usize,
    pub count: usize,
}

/// Where a dataset comes from, optionally restricted to the rows with
/// `row % shard.count == shard.index` and then to the first `limit` rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRef {
    #[serde(flatten)]
    pub source: DatasetSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shard: Option<Shard>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub limit: Option<usize>,
}

impl DatasetRef {
    pub fn load(&self) -> Result<Batch, ProtocolError> {
        let full = match &self.source {
            DatasetSource::Synthetic {
                num_classes,
                dim,
                per_class,
                spread,
                seed,
            } => synth_blobs(*num_classes, *dim, *per_class, *spread, *seed)?,
            DatasetSource::Idx { images, labels } => load_idx(images, labels)?,
        };
        let mut rows: Vec<usize> = match self.shard {
            Some(Shard { index, count }) => {
                if count == 0 || index >= count {
                    return Err(ProtocolError::Config(format!(
                        "invalid shard {index} of {count}"
                    )));
                }
                (index..full.len()).step_by(count).collect()
            }
            None => (0..full.len()).collect(),
        };
        if let Some(limit) = self.limit {
            rows.truncate(limit);
        }
        if rows.is_empty() {
            return Err(ProtocolError::Config("dataset selection is empty".into()));
        }
        Ok(full.select(&rows)?)
    }
}

/// The agreed description of one training session. Its canonical JSON form
/// (sorted keys) is what attestation measurements bind to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub session_id: String,
    pub num_workers: usize,
    /// Planned iteration count; noise calibration spends the budget over it.
    pub iterations: u64,
    pub privacy: PrivacyParams,
    /// Replace `privacy.sigma` with the value calibrated from `budget` and `iterations`.
    #[serde(default)]
    pub calibrate_noise: bool,
    #[serde(default)]
    pub dynamic_clipping: DynamicClipping,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget: Option<Budget>,
    pub model: ModelSpec,
    pub datasets: Vec<DatasetRef>,
    pub test_set: DatasetRef,
    pub learning_rate: f64,
    pub batch_size: usize,
    /// Recorded for provenance only; batches are deterministic slices.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subsampling_ratio: Option<f64>,
    pub seed: u64,
    pub stop: StopConditions,
    #[serde(default = "default_eval_every")]
    pub eval_every: u64,
}

impl SessionConfig {
    pub fn from_json(json: &str) -> Result<Self, ProtocolError> {
        let config: Self =
            serde_json::from_str(json).map_err(|e| ProtocolError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Sorted-key compact JSON. Stable across runs and processes.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        // serde_json's default map is ordered by key, so a round-trip through
        // `Value` sorts every object.
        let value = serde_json::to_value(self).expect("config serializes");
        serde_json::to_vec(&value).expect("value serializes")
    }

    /// Hex SHA-256 of [`canonical_bytes`](Self::canonical_bytes).
    pub fn digest_hex(&self) -> String {
        use sha2::{Digest, Sha256};
        Sha256::digest(self.canonical_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    pub fn validate(&self) -> Result<(), ProtocolError> {
        let bad = |m: String| Err(ProtocolError::Config(m));
        if self.session_id.is_empty() {
            return bad("session_id must be non-empty".into());
        }
        if self.num_workers == 0 {
            return bad("num_workers must be >= 1".into());
        }
        if u16::try_from(self.num_workers).map_or(true, |n| n > u16::MAX - 2) {
            return bad("too many workers".into());
        }
        if self.datasets.len() != self.num_workers {
            return bad(format!(
                "{} dataset refs for {} workers",
                self.datasets.len(),
                self.num_workers
            ));
        }
        if self.iterations == 0 {
            return bad("iterations must be >= 1".into());
        }
        if self.stop.max_iterations == 0 {
            return bad("stop.max_iterations must be >= 1".into());
        }
        if let Some(a) = self.stop.target_accuracy {
            if !(0.0..=1.0).contains(&a) {
                return bad("target_accuracy must lie in [0, 1]".into());
            }
        }
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1".into());
        }
        if !self.learning_rate.is_finite() || self.learning_rate < 0.0 {
            return bad("learning_rate must be finite and >= 0".into());
        }
        if self.eval_every == 0 {
            return bad("eval_every must be >= 1".into());
        }
        if self.dynamic_clipping.cadence == 0 {
            return bad("dynamic_clipping.cadence must be >= 1".into());
        }
        self.privacy
            .validate()
            .map_err(|e| ProtocolError::Config(e.to_string()))?;
        if self.calibrate_noise && self.budget.is_none() {
            return bad("calibrate_noise requires a budget".into());
        }
        let private = self.calibrate_noise || self.privacy.sigma > 0.0;
        if self.dynamic_clipping.enabled && private && self.privacy.sigma_g <= 0.0 {
            return bad("dynamic clipping in a private session needs sigma_g > 0".into());
        }
        if self.model.layer_dims.len() < 2 || self.model.layer_dims.contains(&0) {
            return bad("model.layer_dims needs >= 2 positive widths".into());
        }
        Ok(())
    }

    /// Number of histogram rounds among the first `t` iterations.
    pub fn clipping_rounds(&self, t: u64) -> u64 {
        if self.dynamic_clipping.enabled {
            t.div_ceil(self.dynamic_clipping.cadence)
        } else {
            0
        }
    }

    pub fn is_clipping_round(&self, iteration: u64) -> bool {
        self.dynamic_clipping.enabled && (iteration - 1).is_multiple_of(self.dynamic_clipping.cadence)
    }
}
