use std::collections::BTreeMap;
use std::time::Instant;

use log::{error, info};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::experiment::{AttentionRow, Experiment, MethodOutcome, TransformedRow};
use super::metrics::MetricsReport;
use super::ExperimentPlan;
use crate::{Error, Result};

pub const SUITE_CSV_HEADER: &str = "task,beta,method,stage,seed,mae,rmse,n_eval,runtime_s";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SuiteOptions {
    /// Worker threads; plans sharing data and pre-training run on one worker.
    pub parallelism: usize,
    /// Record 0 instead of wall-clock runtimes, for byte-identical tables.
    pub zero_runtime: bool,
    pub collect_attention: bool,
    pub collect_embeddings: bool,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        Self {
            parallelism: 1,
            zero_runtime: false,
            collect_attention: false,
            collect_embeddings: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteRow {
    /// Task label and base model, e.g. `synthetic-per_user_linear/mf`.
    pub task: String,
    pub beta: f64,
    pub method: String,
    /// `cold`, `warm`, or `failed`.
    pub stage: String,
    /// The run seed, or `mean` for rows averaged over seeds.
    pub seed: String,
    pub mae: f64,
    pub rmse: f64,
    pub n_eval: usize,
    pub runtime_s: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionExport {
    pub task: String,
    pub beta: f64,
    pub seed: u64,
    #[serde(flatten)]
    pub row: AttentionRow,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingExport {
    pub task: String,
    pub beta: f64,
    pub seed: u64,
    #[serde(flatten)]
    pub row: TransformedRow,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SuiteTable {
    pub rows: Vec<SuiteRow>,
    #[serde(skip)]
    pub reports: Vec<MetricsReport>,
    #[serde(skip)]
    pub attention: Vec<AttentionExport>,
    #[serde(skip)]
    pub embeddings: Vec<EmbeddingExport>,
}

impl SuiteTable {
    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| r.stage == "failed").count()
    }

    /// Rows averaged over seeds.
    pub fn mean_rows(&self) -> impl Iterator<Item = &SuiteRow> {
        self.rows.iter().filter(|r| r.seed == "mean")
    }

    pub fn find(&self, method: &str, stage: &str, seed: &str) -> Option<&SuiteRow> {
        self.rows
            .iter()
            .find(|r| r.method == method && r.stage == stage && r.seed == seed)
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(SUITE_CSV_HEADER.split(','))?;
        for r in &self.rows {
            w.write_record([
                r.task.clone(),
                r.beta.to_string(),
                r.method.clone(),
                r.stage.clone(),
                r.seed.clone(),
                r.mae.to_string(),
                r.rmse.to_string(),
                r.n_eval.to_string(),
                r.runtime_s.to_string(),
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Checkpoint(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    /// JSON mirror of the csv. Non-finite metrics of failed rows become
    /// `null`.
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.rows)?)
    }

    pub fn attention_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["task", "beta", "seed", "user", "item", "weight"])?;
        for a in &self.attention {
            w.write_record([
                a.task.clone(),
                a.beta.to_string(),
                a.seed.to_string(),
                a.row.user.clone(),
                a.row.item.clone(),
                a.row.weight.to_string(),
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Checkpoint(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn embeddings_csv(&self) -> Result<String> {
        embeddings_csv(&self.embeddings)
    }
}

pub(crate) fn embeddings_csv(rows: &[EmbeddingExport]) -> Result<String> {
    let dim = rows.first().map_or(0, |r| r.row.values.len());
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = ["task", "beta", "seed", "method", "user"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend((0..dim).map(|d| format!("d{d}")));
    w.write_record(&header)?;
    for e in rows {
        let mut rec = vec![
            e.task.clone(),
            e.beta.to_string(),
            e.seed.to_string(),
            e.row.method.as_str().to_string(),
            e.row.user.clone(),
        ];
        rec.extend(e.row.values.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Checkpoint(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

struct PlanResult {
    outcome: std::result::Result<MethodOutcome, String>,
    runtime_s: f64,
}

fn group_key(p: &ExperimentPlan) -> String {
    serde_json::to_string(&(&p.task, p.base_model, p.beta, p.seed, &p.hyper))
        .expect("plans serialize")
}

fn run_group(plans: &[(usize, &ExperimentPlan)]) -> Vec<(usize, PlanResult)> {
    let first = plans[0].1;
    let start = Instant::now();
    let exp = Experiment::prepare(&first.task, first.base_model, first.beta, first.seed, &first.hyper);
    let prep_s = start.elapsed().as_secs_f64();
    plans
        .iter()
        .map(|&(i, plan)| {
            let t = Instant::now();
            let outcome = match &exp {
                Ok(exp) => exp.run_method(plan.method).map_err(|e| e.to_string()),
                Err(e) => Err(e.to_string()),
            };
            if let Err(e) = &outcome {
                error!("plan {i} ({} seed {}) failed: {e}", plan.method, plan.seed);
            }
            let runtime_s = prep_s + t.elapsed().as_secs_f64();
            (i, PlanResult { outcome, runtime_s })
        })
        .collect()
}

/// Runs every plan and tabulates per-seed rows in plan order, followed by
/// one mean row per `(task, β, method, stage)` that has several seeds.
/// A failing plan yields one `failed` row and the rest continue.
pub fn run_suite(plans: &[ExperimentPlan], opts: &SuiteOptions) -> Result<SuiteTable> {
    if plans.is_empty() {
        return Err(Error::Empty("suite plans"));
    }
    let mut groups: BTreeMap<String, Vec<(usize, &ExperimentPlan)>> = BTreeMap::new();
    let mut order = Vec::new();
    for (i, p) in plans.iter().enumerate() {
        let key = group_key(p);
        if !groups.contains_key(&key) {
            order.push(key.clone());
        }
        groups.entry(key).or_default().push((i, p));
    }
    let grouped: Vec<&Vec<(usize, &ExperimentPlan)>> = order.iter().map(|k| &groups[k]).collect();
    info!("suite: {} plan(s) in {} group(s)", plans.len(), grouped.len());

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.parallelism.max(1))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let mut results: Vec<(usize, PlanResult)> = pool.install(|| {
        grouped
            .par_iter()
            .map(|g| run_group(g))
            .flatten()
            .collect()
    });
    results.sort_by_key(|(i, _)| *i);

    let mut table = SuiteTable::default();
    for (i, res) in results {
        let plan = &plans[i];
        let task = format!("{}/{}", plan.task.label(), plan.base_model.as_str());
        let runtime_s = if opts.zero_runtime { 0.0 } else { res.runtime_s };
        match res.outcome {
            Ok(out) => {
                for r in [&out.cold, &out.warm] {
                    table.rows.push(SuiteRow {
                        task: task.clone(),
                        beta: plan.beta,
                        method: plan.method.as_str().to_string(),
                        stage: r.stage.as_str().to_string(),
                        seed: plan.seed.to_string(),
                        mae: r.mae,
                        rmse: r.rmse,
                        n_eval: r.n_eval,
                        runtime_s,
                        error: None,
                    });
                }
                if opts.collect_attention {
                    table.attention.extend(out.attention.into_iter().map(|row| AttentionExport {
                        task: task.clone(),
                        beta: plan.beta,
                        seed: plan.seed,
                        row,
                    }));
                }
                if opts.collect_embeddings {
                    table.embeddings.extend(out.transformed.into_iter().map(|row| EmbeddingExport {
                        task: task.clone(),
                        beta: plan.beta,
                        seed: plan.seed,
                        row,
                    }));
                }
                table.reports.push(out.cold);
                table.reports.push(out.warm);
            }
            Err(message) => table.rows.push(SuiteRow {
                task,
                beta: plan.beta,
                method: plan.method.as_str().to_string(),
                stage: "failed".into(),
                seed: plan.seed.to_string(),
                mae: f64::NAN,
                rmse: f64::NAN,
                n_eval: 0,
                runtime_s,
                error: Some(message),
            }),
        }
    }

    // (task, beta bits, method, stage) -> row indices, in first-seen order
    let mut keys: Vec<(String, u64, String, String)> = Vec::new();
    let mut members: BTreeMap<(String, u64, String, String), Vec<usize>> = BTreeMap::new();
    for (i, r) in table.rows.iter().enumerate() {
        if r.stage == "failed" {
            continue;
        }
        let key = (r.task.clone(), r.beta.to_bits(), r.method.clone(), r.stage.clone());
        if !members.contains_key(&key) {
            keys.push(key.clone());
        }
        members.entry(key).or_default().push(i);
    }
    let mut means = Vec::new();
    for key in keys {
        let idx = &members[&key];
        if idx.len() < 2 {
            continue;
        }
        let n = idx.len() as f64;
        let mean = |f: &dyn Fn(&SuiteRow) -> f64| idx.iter().map(|&i| f(&table.rows[i])).sum::<f64>() / n;
        let first = &table.rows[idx[0]];
        means.push(SuiteRow {
            task: first.task.clone(),
            beta: first.beta,
            method: first.method.clone(),
            stage: first.stage.clone(),
            seed: "mean".into(),
            mae: mean(&|r| r.mae),
            rmse: mean(&|r| r.rmse),
            n_eval: idx.iter().map(|&i| table.rows[i].n_eval).sum::<usize>() / idx.len(),
            runtime_s: mean(&|r| r.runtime_s),
            error: None,
        });
    }
    table.rows.extend(means);
    Ok(table)
}
