//! End-to-end experiments.
//!
//! One [`Experiment`] loads (or generates) both domains, splits the
//! overlapping users, and pre-trains a source and a target model. Each
//! [`Method`] then produces an initial target representation for every
//! test user, which is scored on the user's cold set, fine-tuned on that
//! cold set, and scored again on the warm set.

mod experiment;
mod metrics;
mod suite;
mod synthetic;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

pub use experiment::{
    run_cold, run_plan, run_warm, AttentionRow, ColdStart, Experiment, LeakageAudit,
    MethodOutcome, Pretraining, TransformedRow, SOURCE_CHECKPOINT, TARGET_CHECKPOINT,
};
pub use metrics::{compute_metrics, MetricsReport, Stage};
pub use suite::{
    run_suite, AttentionExport, EmbeddingExport, SuiteOptions, SuiteRow, SuiteTable,
    SUITE_CSV_HEADER,
};
pub(crate) use suite::embeddings_csv;
pub use synthetic::{generate_synthetic, BridgeFamily, PlantedTruth, SyntheticData, SyntheticSpec};

use crate::bridge::DEFAULT_MAX_SEQ_LEN;
use crate::models::{ModelKind, TrainConfig};
use crate::nn::Activation;
use crate::{Error, Result};

/// Learning rates searched over for every stage.
pub const LR_GRID: [f64; 5] = [0.001, 0.005, 0.01, 0.02, 0.1];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Target-only model; the cold user keeps a random embedding.
    Tgt,
    /// Shared user embeddings across domains.
    Cmf,
    /// One common linear bridge trained by regression onto target embeddings.
    Emcdr,
    /// Meta-generated per-user bridge trained on target ratings.
    Ptupcdr,
    /// Meta-generated per-user bridge trained by regression onto target
    /// embeddings.
    PtupcdrMappingAblation,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Tgt,
        Method::Cmf,
        Method::Emcdr,
        Method::Ptupcdr,
        Method::PtupcdrMappingAblation,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Tgt => "tgt",
            Method::Cmf => "cmf",
            Method::Emcdr => "emcdr",
            Method::Ptupcdr => "ptupcdr",
            Method::PtupcdrMappingAblation => "ptupcdr_mapping_ablation",
        }
    }

    pub fn uses_source(self) -> bool {
        self != Method::Tgt
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Task {
    /// Two rating logs on disk. The source may be omitted for `tgt` runs.
    Amazon {
        source: Option<PathBuf>,
        target: PathBuf,
    },
    Synthetic(SyntheticSpec),
}

impl Task {
    pub fn label(&self) -> String {
        match self {
            Task::Amazon { source, target } => {
                let stem = |p: &PathBuf| {
                    p.file_stem()
                        .map(|s| s.to_string_lossy().into_owned())
                        .unwrap_or_default()
                };
                match source {
                    Some(s) => format!("{}->{}", stem(s), stem(target)),
                    None => format!("none->{}", stem(target)),
                }
            }
            Task::Synthetic(spec) => format!("synthetic-{}", spec.bridge_family.as_str()),
        }
    }
}

/// Hyperparameters of every stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Hyper {
    /// Embedding dimension.
    pub k: usize,
    pub activation: Activation,
    /// Most recent source items pooled per user; `null` pools all.
    pub max_seq_len: Option<usize>,
    pub pretrain: TrainConfig,
    pub cmf: TrainConfig,
    pub bridge: TrainConfig,
    pub meta: TrainConfig,
    pub warm: TrainConfig,
    /// Fine-tune target item embeddings too during the warm stage.
    pub warm_train_items: bool,
    /// Pre-train the source model on the test users' source ratings as well.
    /// When off, test users' source rows are fitted afterwards with items
    /// frozen.
    pub source_includes_test_users: bool,
    /// Permit learning rates outside [`LR_GRID`].
    pub allow_off_grid_lr: bool,
}

impl Default for Hyper {
    fn default() -> Self {
        Self {
            k: 10,
            activation: Activation::Relu,
            max_seq_len: Some(DEFAULT_MAX_SEQ_LEN),
            pretrain: TrainConfig::default(),
            cmf: TrainConfig::default(),
            bridge: TrainConfig::default(),
            meta: TrainConfig::default(),
            warm: TrainConfig::default(),
            warm_train_items: false,
            source_includes_test_users: true,
            allow_off_grid_lr: false,
        }
    }
}

impl Hyper {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::invalid("k", "must be >= 1"));
        }
        if self.max_seq_len == Some(0) {
            return Err(Error::invalid("max_seq_len", "must be >= 1 or null"));
        }
        let stages = [
            ("pretrain", &self.pretrain),
            ("cmf", &self.cmf),
            ("bridge", &self.bridge),
            ("meta", &self.meta),
            ("warm", &self.warm),
        ];
        for (name, cfg) in stages {
            cfg.validate(name).map_err(|e| match e {
                Error::InvalidArgument { message, .. } => {
                    Error::Config(format!("{name}: {message}"))
                }
                other => other,
            })?;
            if !self.allow_off_grid_lr && !LR_GRID.contains(&cfg.lr) {
                return Err(Error::Config(format!(
                    "{name}.lr = {} is not in the grid {LR_GRID:?} (set allow_off_grid_lr to override)",
                    cfg.lr
                )));
            }
        }
        Ok(())
    }
}

/// Everything that determines one method's run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPlan {
    pub task: Task,
    pub base_model: ModelKind,
    pub method: Method,
    pub beta: f64,
    pub seed: u64,
    pub hyper: Hyper,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_hyper_is_on_grid() {
        Hyper::default().validate().unwrap();
    }

    #[test]
    fn off_grid_lr_rejected_unless_allowed() {
        let mut h = Hyper::default();
        h.meta.lr = 0.003;
        assert!(matches!(h.validate(), Err(Error::Config(_))));
        h.allow_off_grid_lr = true;
        h.validate().unwrap();
        h.k = 0;
        assert!(h.validate().is_err());
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            let s = serde_json::to_string(&m).unwrap();
            assert_eq!(s, format!("\"{}\"", m.as_str()));
            assert_eq!(serde_json::from_str::<Method>(&s).unwrap(), m);
        }
    }
}
