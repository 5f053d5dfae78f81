//! Run and suite configuration documents (JSON or TOML).
//!
//! Relative paths inside a config file resolve against the file's directory.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::models::ModelKind;
use crate::pipeline::{ExperimentPlan, Hyper, Method, Task};
use crate::{Error, Result};

/// Which part of a run to execute.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStage {
    /// Pre-train, bridge, cold and warm evaluation.
    #[default]
    Full,
    /// Pre-train only and write the models to `checkpoint_dir`.
    Pretrain,
    /// Load pre-trained models from `checkpoint_dir`, then continue.
    Meta,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub task: Task,
    #[serde(default = "default_model")]
    pub base_model: ModelKind,
    pub method: Method,
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub hyper: Hyper,
    #[serde(default)]
    pub stage: RunStage,
    #[serde(default)]
    pub checkpoint_dir: Option<PathBuf>,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    #[serde(default)]
    pub export_attention: bool,
    #[serde(default)]
    pub export_embeddings: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteConfig {
    pub task: Task,
    #[serde(default = "default_models")]
    pub base_models: Vec<ModelKind>,
    pub methods: Vec<Method>,
    #[serde(default = "default_betas")]
    pub betas: Vec<f64>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub hyper: Hyper,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
}

fn default_model() -> ModelKind {
    ModelKind::Mf
}

fn default_models() -> Vec<ModelKind> {
    vec![ModelKind::Mf]
}

fn default_beta() -> f64 {
    0.2
}

fn default_betas() -> Vec<f64> {
    vec![0.2, 0.5, 0.8]
}

fn default_seeds() -> Vec<u64> {
    (0..5).collect()
}

fn parse<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let is_toml = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("toml"));
    if is_toml {
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    } else {
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}

fn resolve(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

fn resolve_task(base: &Path, task: &mut Task) {
    if let Task::Amazon { source, target } = task {
        if let Some(s) = source {
            resolve(base, s);
        }
        resolve(base, target);
    }
}

fn base_dir(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg: Self = parse(path)?;
        let base = base_dir(path);
        resolve_task(&base, &mut cfg.task);
        for p in [&mut cfg.checkpoint_dir, &mut cfg.out_dir].into_iter().flatten() {
            resolve(&base, p);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.hyper.validate()?;
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(Error::invalid("beta", format!("{} is not in (0, 1)", self.beta)));
        }
        if self.stage != RunStage::Full && self.checkpoint_dir.is_none() {
            return Err(Error::Config(format!(
                "stage {:?} needs checkpoint_dir",
                self.stage
            )));
        }
        if let Task::Amazon { source: None, .. } = self.task {
            if self.method.uses_source() {
                return Err(Error::Config(format!(
                    "method {} needs task.amazon.source",
                    self.method
                )));
            }
        }
        Ok(())
    }

    pub fn plan(&self) -> ExperimentPlan {
        ExperimentPlan {
            task: self.task.clone(),
            base_model: self.base_model,
            method: self.method,
            beta: self.beta,
            seed: self.seed,
            hyper: self.hyper.clone(),
        }
    }
}

impl SuiteConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg: Self = parse(path)?;
        let base = base_dir(path);
        resolve_task(&base, &mut cfg.task);
        if let Some(p) = &mut cfg.out_dir {
            resolve(&base, p);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.hyper.validate()?;
        if self.methods.is_empty() || self.betas.is_empty() || self.seeds.is_empty() || self.base_models.is_empty() {
            return Err(Error::Config(
                "methods, betas, seeds and base_models must be non-empty".into(),
            ));
        }
        Ok(())
    }

    /// Plans ordered by base model, β, method, then seed.
    pub fn plans(&self) -> Vec<ExperimentPlan> {
        let mut out = Vec::new();
        for &base_model in &self.base_models {
            for &beta in &self.betas {
                for &method in &self.methods {
                    for &seed in &self.seeds {
                        out.push(ExperimentPlan {
                            task: self.task.clone(),
                            base_model,
                            method,
                            beta,
                            seed,
                            hyper: self.hyper.clone(),
                        });
                    }
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_and_toml_agree() {
        let dir = tempfile::tempdir().unwrap();
        let j = dir.path().join("run.json");
        std::fs::write(
            &j,
            r#"{"task": {"amazon": {"source": "a.csv", "target": "b.csv"}}, "method": "emcdr", "seed": 3}"#,
        )
        .unwrap();
        let t = dir.path().join("run.toml");
        std::fs::write(
            &t,
            "method = \"emcdr\"\nseed = 3\n[task.amazon]\nsource = \"a.csv\"\ntarget = \"b.csv\"\n",
        )
        .unwrap();
        let a = RunConfig::load(&j).unwrap();
        let b = RunConfig::load(&t).unwrap();
        assert_eq!(a, b);
        assert_eq!(
            a.task,
            Task::Amazon {
                source: Some(dir.path().join("a.csv")),
                target: dir.path().join("b.csv"),
            }
        );
    }

    #[test]
    fn unknown_keys_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let j = dir.path().join("run.json");
        std::fs::write(
            &j,
            r#"{"task": {"synthetic": {}}, "method": "tgt", "learning_rate": 0.1}"#,
        )
        .unwrap();
        assert!(matches!(RunConfig::load(&j), Err(Error::Config(_))));
        std::fs::write(
            &j,
            r#"{"task": {"synthetic": {}}, "method": "tgt", "hyper": {"meta": {"lr": 0.01, "momentum": 1}}}"#,
        )
        .unwrap();
        assert!(matches!(RunConfig::load(&j), Err(Error::Config(_))));
    }

    #[test]
    fn stage_needs_checkpoint_dir() {
        let cfg = RunConfig {
            task: Task::Synthetic(Default::default()),
            base_model: ModelKind::Mf,
            method: Method::Ptupcdr,
            beta: 0.2,
            seed: 0,
            hyper: Hyper::default(),
            stage: RunStage::Meta,
            checkpoint_dir: None,
            out_dir: None,
            export_attention: false,
            export_embeddings: false,
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn suite_plan_order() {
        let cfg = SuiteConfig {
            task: Task::Synthetic(Default::default()),
            base_models: vec![ModelKind::Mf],
            methods: vec![Method::Tgt, Method::Emcdr],
            betas: vec![0.2],
            seeds: vec![1, 2, 3],
            hyper: Hyper::default(),
            out_dir: None,
        };
        let plans = cfg.plans();
        assert_eq!(plans.len(), 6);
        assert_eq!(plans[0].method, Method::Tgt);
        assert_eq!(plans[3].method, Method::Emcdr);
        assert_eq!(plans[4].seed, 2);
    }
}
