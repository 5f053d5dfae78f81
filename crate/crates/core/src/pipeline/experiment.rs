use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use log::{debug, info, warn};
use serde::{Deserialize, Serialize};

use super::metrics::{compute_metrics, MetricsReport, Stage};
use super::synthetic::{generate_synthetic, PlantedTruth};
use super::{ExperimentPlan, Hyper, Method, Task};
use crate::bridge::{
    attention_scores, train_common_bridge, train_meta, train_meta_mapping, BridgeTrainReport,
    CommonBridge, MappingTarget, MetaBridge, TaskSample, UserContext,
};
use crate::data::{
    load_domain, make_split, make_target_only_split, DomainDataset, Format, SplitPlan,
};
use crate::models::{
    cmf_train, fine_tune_representations, fold_in_users, pretrain, DomainModel, EmbeddingTable,
    FineTuneSample, ModelKind,
};
use crate::nn::{dot, Checkpoint};
use crate::rng::stream;
use crate::{Error, Result};

/// File names of pre-trained checkpoints inside a checkpoint directory.
pub const SOURCE_CHECKPOINT: &str = "source_model.json";
pub const TARGET_CHECKPOINT: &str = "target_model.json";

/// Cold-set ratings of every test user, as target rating indices.
struct ColdSets(Vec<(String, Vec<usize>)>);

/// Warm-set ratings of every test user. Only the warm stage reads these.
struct WarmSets(Vec<(String, Vec<usize>)>);

/// One row of the per-user attention dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionRow {
    pub user: String,
    pub item: String,
    pub weight: f64,
}

/// A test user's initial target representation under one method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformedRow {
    pub user: String,
    pub method: Method,
    pub values: Vec<f64>,
}

/// Target rating indices each stage could see.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LeakageAudit {
    pub pretrain: BTreeSet<usize>,
    pub meta: BTreeSet<usize>,
    pub cold_eval: BTreeSet<usize>,
    pub warm_fine_tune: BTreeSet<usize>,
    pub warm_eval: BTreeSet<usize>,
}

impl LeakageAudit {
    /// Warm-set ratings visible to any earlier stage. Empty when the protocol
    /// holds.
    pub fn leaked(&self) -> Vec<usize> {
        self.warm_eval
            .iter()
            .copied()
            .filter(|i| {
                self.pretrain.contains(i)
                    || self.meta.contains(i)
                    || self.cold_eval.contains(i)
                    || self.warm_fine_tune.contains(i)
            })
            .collect()
    }
}

/// Data, split and pre-trained models shared by every method of one
/// `(task, base model, β, seed)` combination.
pub struct Experiment {
    pub task_label: String,
    pub base_model: ModelKind,
    pub beta: f64,
    pub seed: u64,
    pub hyper: Hyper,
    pub source: DomainDataset,
    pub target: DomainDataset,
    pub truth: Option<PlantedTruth>,
    pub split: SplitPlan,
    pub source_model: Option<DomainModel>,
    pub target_model: DomainModel,
    source_pool: Vec<usize>,
    target_pool: Vec<usize>,
    contexts: Vec<UserContext>,
    context_items: Vec<Vec<usize>>,
    context_of: BTreeMap<String, usize>,
    seen_items: Vec<bool>,
    cold: ColdSets,
    warm: WarmSets,
}

/// Everything the cold stage of one method produced.
pub struct ColdStart {
    pub method: Method,
    pub report: MetricsReport,
    /// Model whose item side scores the test users.
    pub scorer: DomainModel,
    /// Initial representation per test user, `None` when it has none.
    pub reps: Vec<Option<Vec<f64>>>,
    pub bridge_report: Option<BridgeTrainReport>,
    pub meta: Option<MetaBridge>,
    pub common: Option<CommonBridge>,
}

pub struct MethodOutcome {
    pub cold: MetricsReport,
    pub warm: MetricsReport,
    pub bridge_report: Option<BridgeTrainReport>,
    pub attention: Vec<AttentionRow>,
    pub transformed: Vec<TransformedRow>,
    pub audit: LeakageAudit,
}

/// Where pre-trained models come from.
pub enum Pretraining<'a> {
    Train,
    Load(&'a Path),
}

fn load_task(task: &Task, seed: u64) -> Result<(DomainDataset, DomainDataset, Option<PlantedTruth>)> {
    match task {
        Task::Amazon { source, target } => {
            let tgt = load_domain(target, Format::from_path(target))?;
            let src = match source {
                Some(p) => load_domain(p, Format::from_path(p))?,
                None => DomainDataset::default(),
            };
            info!(
                "loaded source {} ratings, target {} ratings",
                src.len(),
                tgt.len()
            );
            Ok((src, tgt, None))
        }
        Task::Synthetic(spec) => {
            let d = generate_synthetic(spec, seed)?;
            Ok((d.source, d.target, Some(d.truth)))
        }
    }
}

impl Experiment {
    pub fn prepare(
        task: &Task,
        base_model: ModelKind,
        beta: f64,
        seed: u64,
        hyper: &Hyper,
    ) -> Result<Self> {
        Self::prepare_with(task, base_model, beta, seed, hyper, Pretraining::Train)
    }

    pub fn prepare_with(
        task: &Task,
        base_model: ModelKind,
        beta: f64,
        seed: u64,
        hyper: &Hyper,
        pretraining: Pretraining<'_>,
    ) -> Result<Self> {
        hyper.validate()?;
        let (src, tgt, truth) = load_task(task, seed)?;
        Self::from_datasets(task.label(), src, tgt, truth, base_model, beta, seed, hyper, pretraining)
    }

    #[allow(clippy::too_many_arguments)]
    pub fn from_datasets(
        task_label: String,
        source: DomainDataset,
        target: DomainDataset,
        truth: Option<PlantedTruth>,
        base_model: ModelKind,
        beta: f64,
        seed: u64,
        hyper: &Hyper,
        pretraining: Pretraining<'_>,
    ) -> Result<Self> {
        hyper.validate()?;
        let split = if source.is_empty() {
            make_target_only_split(&target, beta, seed)?
        } else {
            make_split(&source, &target, beta, seed)?
        };
        let target_pool = split.target_training_pool(&target);
        let source_pool = if hyper.source_includes_test_users {
            (0..source.len()).collect()
        } else {
            split.source_without_test_users(&source)
        };

        let (source_model, target_model) = match pretraining {
            Pretraining::Train => {
                let source_model = if source.is_empty() {
                    None
                } else {
                    let mut m = pretrain(
                        &source,
                        &source_pool,
                        base_model,
                        hyper.k,
                        hyper.activation,
                        &hyper.pretrain,
                        &mut stream(seed, "pretrain.source"),
                    )?
                    .model;
                    if !hyper.source_includes_test_users {
                        let held: Vec<usize> = {
                            let kept: BTreeSet<usize> = source_pool.iter().copied().collect();
                            (0..source.len()).filter(|i| !kept.contains(i)).collect()
                        };
                        fold_in_users(
                            &mut m,
                            &source,
                            &held,
                            &hyper.pretrain,
                            &mut stream(seed, "foldin.source"),
                        )?;
                    }
                    Some(m)
                };
                let target_model = pretrain(
                    &target,
                    &target_pool,
                    base_model,
                    hyper.k,
                    hyper.activation,
                    &hyper.pretrain,
                    &mut stream(seed, "pretrain.target"),
                )?
                .model;
                (source_model, target_model)
            }
            Pretraining::Load(dir) => {
                let load = |name: &str| -> Result<DomainModel> {
                    DomainModel::from_checkpoint(&Checkpoint::load(&dir.join(name))?)
                };
                let source_model = if source.is_empty() {
                    None
                } else {
                    Some(load(SOURCE_CHECKPOINT)?)
                };
                let target_model = load(TARGET_CHECKPOINT)?;
                (source_model, target_model)
            }
        };
        if let Some(m) = &source_model {
            crate::error::check_len("source model users", source.users.len(), m.users.count())?;
            crate::error::check_len("source model items", source.items.len(), m.items.count())?;
        }
        crate::error::check_len("target model users", target.users.len(), target_model.users.count())?;
        crate::error::check_len("target model items", target.items.len(), target_model.items.count())?;

        let mut seen_items = vec![false; target.items.len()];
        for &i in &target_pool {
            seen_items[target.ratings[i].item] = true;
        }

        let mut contexts = Vec::new();
        let mut context_items = Vec::new();
        let mut context_of = BTreeMap::new();
        if let Some(m) = &source_model {
            let by_user = source.ratings_by_user();
            let candidates = split
                .train_overlap_users
                .iter()
                .chain(split.test_users.iter().map(|t| &t.user));
            for id in candidates {
                let Some(u) = source.users.index(id) else { continue };
                let items: Vec<usize> = by_user[u].iter().map(|&i| source.ratings[i].item).collect();
                if items.is_empty() {
                    continue;
                }
                context_of.insert(id.clone(), contexts.len());
                contexts.push(UserContext {
                    src_rep: m.user_representation(u)?,
                    history: items.iter().map(|&j| m.items.row(j).to_vec()).collect(),
                });
                context_items.push(items);
            }
        }

        let cold = ColdSets(
            split
                .test_users
                .iter()
                .map(|t| (t.user.clone(), t.cold.clone()))
                .collect(),
        );
        let warm = WarmSets(
            split
                .test_users
                .iter()
                .map(|t| (t.user.clone(), t.warm.clone()))
                .collect(),
        );

        Ok(Self {
            task_label,
            base_model,
            beta,
            seed,
            hyper: hyper.clone(),
            source,
            target,
            truth,
            split,
            source_model,
            target_model,
            source_pool,
            target_pool,
            contexts,
            context_items,
            context_of,
            seen_items,
            cold,
            warm,
        })
    }

    /// Writes the pre-trained models into `dir`.
    pub fn save_pretrained(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        if let Some(m) = &self.source_model {
            m.to_checkpoint().save(&dir.join(SOURCE_CHECKPOINT))?;
        }
        self.target_model.to_checkpoint().save(&dir.join(TARGET_CHECKPOINT))
    }

    pub fn source_pool(&self) -> &[usize] {
        &self.source_pool
    }

    pub fn target_pool(&self) -> &[usize] {
        &self.target_pool
    }

    /// Bridge inputs of every overlapping user with source history.
    pub fn contexts(&self) -> &[UserContext] {
        &self.contexts
    }

    pub fn context_index(&self, user: &str) -> Option<usize> {
        self.context_of.get(user).copied()
    }

    /// Task-oriented samples: target ratings of training-overlap users, each
    /// with its rating index.
    pub fn meta_samples(&self) -> (Vec<TaskSample>, Vec<usize>) {
        let train: BTreeSet<&str> = self.split.train_overlap_users.iter().map(String::as_str).collect();
        let mut samples = Vec::new();
        let mut indices = Vec::new();
        for &i in &self.target_pool {
            let r = &self.target.ratings[i];
            let id = self.target.users.id(r.user).unwrap_or_default();
            if !train.contains(id) {
                continue;
            }
            if let Some(c) = self.context_index(id) {
                samples.push(TaskSample {
                    user: c,
                    item: r.item,
                    rating: r.rating,
                });
                indices.push(i);
            }
        }
        (samples, indices)
    }

    /// Mapping-oriented targets: the target representation of every
    /// training-overlap user with source history.
    pub fn mapping_targets(&self) -> Result<Vec<MappingTarget>> {
        let mut out = Vec::new();
        for id in &self.split.train_overlap_users {
            let (Some(c), Some(t)) = (self.context_index(id), self.target.users.index(id)) else {
                continue;
            };
            out.push(MappingTarget {
                user: c,
                target: self.target_model.user_representation(t)?,
            });
        }
        Ok(out)
    }

    fn require_source(&self, method: Method) -> Result<()> {
        if self.source_model.is_none() {
            return Err(Error::Config(format!("method {method} needs a source domain")));
        }
        Ok(())
    }

    fn test_contexts(&self) -> Vec<Option<&UserContext>> {
        self.cold
            .0
            .iter()
            .map(|(id, _)| self.context_index(id).map(|c| &self.contexts[c]))
            .collect()
    }

    fn report(&self, method: Method, stage: Stage) -> MetricsReport {
        MetricsReport {
            task: self.task_label.clone(),
            base_model: self.base_model.as_str().to_string(),
            method: method.as_str().to_string(),
            beta: self.beta,
            seed: self.seed,
            stage,
            mae: f64::NAN,
            rmse: f64::NAN,
            n_eval: 0,
            skipped_users: 0,
            unseen_item_predictions: 0,
        }
    }

    fn evaluate(
        &self,
        mut report: MetricsReport,
        scorer: &DomainModel,
        reps: &[Option<Vec<f64>>],
        sets: &[(String, Vec<usize>)],
    ) -> Result<MetricsReport> {
        let items = scorer.item_representations()?;
        let mut pairs = Vec::new();
        for (rep, (_, ratings)) in reps.iter().zip(sets) {
            let Some(rep) = rep else {
                report.skipped_users += 1;
                continue;
            };
            if ratings.is_empty() {
                report.skipped_users += 1;
                continue;
            }
            for &i in ratings {
                let r = &self.target.ratings[i];
                if !self.seen_items[r.item] {
                    report.unseen_item_predictions += 1;
                }
                let pred = dot(rep, &items[r.item]).clamp(0.0, 5.0);
                pairs.push((r.rating, pred));
            }
        }
        let (mae, rmse) = compute_metrics(&pairs)?;
        report.mae = mae;
        report.rmse = rmse;
        report.n_eval = pairs.len();
        Ok(report)
    }

    /// Builds every test user's initial representation and scores it on the
    /// cold sets.
    pub fn cold_start(&self, method: Method) -> Result<ColdStart> {
        let h = &self.hyper;
        let mut bridge_report = None;
        let mut meta = None;
        let mut common = None;
        let (scorer, reps): (DomainModel, Vec<Option<Vec<f64>>>) = match method {
            Method::Tgt => {
                let reps = self
                    .cold
                    .0
                    .iter()
                    .map(|(id, _)| {
                        let u = self.target.users.index(id).expect("test user in target");
                        self.target_model.user_representation(u).map(Some)
                    })
                    .collect::<Result<_>>()?;
                (self.target_model.clone(), reps)
            }
            Method::Cmf => {
                self.require_source(method)?;
                let cmf = cmf_train(
                    &self.source,
                    &self.source_pool,
                    &self.target,
                    &self.target_pool,
                    self.base_model,
                    h.k,
                    h.activation,
                    &h.cmf,
                    &mut stream(self.seed, "cmf"),
                )?;
                let view = cmf.target_view();
                let reps = self
                    .cold
                    .0
                    .iter()
                    .map(|(id, _)| match cmf.user_index(id) {
                        Some(u) => view.user_representation(u).map(Some),
                        None => Ok(None),
                    })
                    .collect::<Result<_>>()?;
                (view, reps)
            }
            Method::Emcdr => {
                self.require_source(method)?;
                let targets = self.mapping_targets()?;
                let sources: Vec<Vec<f64>> =
                    targets.iter().map(|t| self.contexts[t.user].src_rep.clone()).collect();
                let dests: Vec<Vec<f64>> = targets.into_iter().map(|t| t.target).collect();
                let (bridge, rep) = train_common_bridge(
                    &sources,
                    &dests,
                    h.k,
                    &h.bridge,
                    &mut stream(self.seed, "emcdr"),
                )?;
                let reps = self
                    .test_contexts()
                    .into_iter()
                    .map(|c| c.map(|c| bridge.apply(&c.src_rep)).transpose())
                    .collect::<Result<_>>()?;
                bridge_report = Some(rep);
                common = Some(bridge);
                (self.target_model.clone(), reps)
            }
            Method::Ptupcdr | Method::PtupcdrMappingAblation => {
                self.require_source(method)?;
                let mut rng = stream(self.seed, method.as_str());
                let mut model = MetaBridge::new(h.k, h.activation, h.max_seq_len, &mut rng);
                let rep = if method == Method::Ptupcdr {
                    let (samples, _) = self.meta_samples();
                    let item_reps = self.target_model.item_representations()?;
                    train_meta(&mut model, &self.contexts, &item_reps, &samples, &h.meta, &mut rng)?
                } else {
                    let targets = self.mapping_targets()?;
                    train_meta_mapping(&mut model, &self.contexts, &targets, &h.meta, &mut rng)?
                };
                let reps = self
                    .test_contexts()
                    .into_iter()
                    .map(|c| c.map(|c| model.transform(c)).transpose())
                    .collect::<Result<_>>()?;
                bridge_report = Some(rep);
                meta = Some(model);
                (self.target_model.clone(), reps)
            }
        };
        let missing = reps.iter().filter(|r| r.is_none()).count();
        if missing > 0 {
            warn!("{method}: {missing} test user(s) have no source history and are skipped");
        }
        let report = self.evaluate(self.report(method, Stage::Cold), &scorer, &reps, &self.cold.0)?;
        info!(
            "{} {method} cold: mae {:.4} rmse {:.4} over {} ratings",
            self.task_label, report.mae, report.rmse, report.n_eval
        );
        Ok(ColdStart {
            method,
            report,
            scorer,
            reps,
            bridge_report,
            meta,
            common,
        })
    }

    /// Fine-tunes the initial representations on the cold sets and scores
    /// the warm sets. Returns the report and the rating indices fine-tuned on.
    pub fn warm_start(&self, cold: &ColdStart) -> Result<(MetricsReport, Vec<usize>)> {
        let mut slots = Vec::new();
        let mut rows = Vec::new();
        for (n, rep) in cold.reps.iter().enumerate() {
            if let (Some(rep), false) = (rep, self.warm.0[n].1.is_empty()) {
                slots.push(n);
                rows.push(rep.clone());
            }
        }
        let mut reps_out: Vec<Option<Vec<f64>>> = vec![None; cold.reps.len()];
        let mut used = Vec::new();
        let mut scorer = cold.scorer.clone();
        if !rows.is_empty() {
            let mut table = EmbeddingTable::from_rows(&rows)?;
            let mut samples = Vec::new();
            for (slot, &n) in slots.iter().enumerate() {
                for &i in &self.cold.0[n].1 {
                    let r = &self.target.ratings[i];
                    samples.push(FineTuneSample {
                        slot,
                        item: r.item,
                        rating: r.rating,
                    });
                    used.push(i);
                }
            }
            let trace = fine_tune_representations(
                &mut scorer,
                &mut table,
                &samples,
                &self.hyper.warm,
                self.hyper.warm_train_items,
                &mut stream(self.seed, &format!("warm.{}", cold.method)),
            )?;
            debug!("{} warm fine-tune trace {:?}", cold.method, trace.last());
            for (slot, &n) in slots.iter().enumerate() {
                reps_out[n] = Some(table.row(slot).to_vec());
            }
        }
        let report = self.evaluate(self.report(cold.method, Stage::Warm), &scorer, &reps_out, &self.warm.0)?;
        info!(
            "{} {} warm: mae {:.4} rmse {:.4} over {} ratings",
            self.task_label, cold.method, report.mae, report.rmse, report.n_eval
        );
        Ok((report, used))
    }

    /// Attention weights over each test user's source window.
    pub fn attention_rows(&self, model: &MetaBridge) -> Result<Vec<AttentionRow>> {
        let mut out = Vec::new();
        for (id, _) in &self.cold.0 {
            let Some(c) = self.context_index(id) else { continue };
            let weights = attention_scores(&model.encoder, &self.contexts[c].history)?;
            let items = model.encoder.window(&self.context_items[c]);
            for (w, &j) in weights.iter().zip(items) {
                out.push(AttentionRow {
                    user: id.clone(),
                    item: self.source.items.id(j).unwrap_or_default().to_string(),
                    weight: *w,
                });
            }
        }
        Ok(out)
    }

    pub fn transformed_rows(&self, cold: &ColdStart) -> Vec<TransformedRow> {
        self.cold
            .0
            .iter()
            .zip(&cold.reps)
            .filter_map(|((id, _), rep)| {
                rep.as_ref().map(|v| TransformedRow {
                    user: id.clone(),
                    method: cold.method,
                    values: v.clone(),
                })
            })
            .collect()
    }

    /// Cold stage, warm stage and the protocol audit for one method.
    pub fn run_method(&self, method: Method) -> Result<MethodOutcome> {
        let cold = self.cold_start(method)?;
        let (warm, used) = self.warm_start(&cold)?;
        let mut audit = LeakageAudit {
            pretrain: self.target_pool.iter().copied().collect(),
            cold_eval: self.split.cold_indices().into_iter().collect(),
            warm_fine_tune: used.into_iter().collect(),
            warm_eval: self.split.warm_indices().into_iter().collect(),
            ..LeakageAudit::default()
        };
        if method == Method::Ptupcdr {
            audit.meta = self.meta_samples().1.into_iter().collect();
        }
        let attention = match &cold.meta {
            Some(m) => self.attention_rows(m)?,
            None => Vec::new(),
        };
        let transformed = self.transformed_rows(&cold);
        Ok(MethodOutcome {
            cold: cold.report,
            warm,
            bridge_report: cold.bridge_report,
            attention,
            transformed,
            audit,
        })
    }
}

pub fn run_plan(plan: &ExperimentPlan) -> Result<MethodOutcome> {
    let exp = Experiment::prepare(&plan.task, plan.base_model, plan.beta, plan.seed, &plan.hyper)?;
    exp.run_method(plan.method)
}

pub fn run_cold(plan: &ExperimentPlan) -> Result<MetricsReport> {
    let exp = Experiment::prepare(&plan.task, plan.base_model, plan.beta, plan.seed, &plan.hyper)?;
    Ok(exp.cold_start(plan.method)?.report)
}

pub fn run_warm(plan: &ExperimentPlan) -> Result<MetricsReport> {
    let exp = Experiment::prepare(&plan.task, plan.base_model, plan.beta, plan.seed, &plan.hyper)?;
    let cold = exp.cold_start(plan.method)?;
    Ok(exp.warm_start(&cold)?.0)
}
