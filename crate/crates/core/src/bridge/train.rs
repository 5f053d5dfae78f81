use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{
    common_mapping_loss, mapping_oriented_loss, task_oriented_loss, CommonBridge, MappingTarget,
    MetaBridge, TaskSample, UserContext,
};
use crate::models::TrainConfig;
use crate::nn::{init_uniform, Adam, Dense2D, Parameters};
use crate::rng::Rng;
use crate::{Error, Result};

/// Loss trace and sample counters of one bridge training run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BridgeTrainReport {
    /// Full-pass loss after each epoch.
    pub trace: Vec<f64>,
    /// Number of distinct training examples that contributed a gradient.
    pub distinct_examples: usize,
    /// Total example evaluations across all epochs.
    pub examples_processed: usize,
}

struct Counter {
    seen: Vec<bool>,
    distinct: usize,
    processed: usize,
}

impl Counter {
    fn new(n: usize) -> Self {
        Self {
            seen: vec![false; n],
            distinct: 0,
            processed: 0,
        }
    }

    fn hit(&mut self, i: usize) {
        self.processed += 1;
        if !self.seen[i] {
            self.seen[i] = true;
            self.distinct += 1;
        }
    }

    fn report(self, trace: Vec<f64>) -> BridgeTrainReport {
        BridgeTrainReport {
            trace,
            distinct_examples: self.distinct,
            examples_processed: self.processed,
        }
    }
}

fn check_loss(epoch: usize, loss: f64) -> Result<()> {
    if loss.is_finite() {
        Ok(())
    } else {
        Err(Error::Diverged { epoch, loss })
    }
}

/// Trains `(θ, φ)` on target ratings of training-overlap users, one rating
/// per example.
pub fn train_meta(
    model: &mut MetaBridge,
    contexts: &[UserContext],
    item_reps: &[Vec<f64>],
    samples: &[TaskSample],
    cfg: &TrainConfig,
    rng: &mut Rng,
) -> Result<BridgeTrainReport> {
    cfg.validate("meta")?;
    if samples.is_empty() {
        return Err(Error::NoSupervision(
            "no target ratings of training-overlap users".into(),
        ));
    }
    let mut adam = Adam::new(cfg.lr);
    let mut grads = model.zeros_like();
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut counter = Counter::new(samples.len());
    let mut trace = Vec::with_capacity(cfg.epochs);
    let mut batch = Vec::with_capacity(cfg.batch_size);
    for epoch in 0..cfg.epochs {
        order.shuffle(rng);
        for chunk in order.chunks(cfg.batch_size) {
            batch.clear();
            for &i in chunk {
                counter.hit(i);
                batch.push(samples[i]);
            }
            for g in grads.params_mut() {
                g.fill(0.0);
            }
            let loss = task_oriented_loss(model, contexts, item_reps, &batch, Some(&mut grads))?;
            check_loss(epoch, loss)?;
            adam.step(&mut model.params_mut(), &grads.params())?;
        }
        let loss = task_oriented_loss(model, contexts, item_reps, samples, None)?;
        check_loss(epoch, loss)?;
        log::debug!("meta epoch {epoch}: task loss {loss:.6}");
        trace.push(loss);
    }
    Ok(counter.report(trace))
}

/// Trains `(θ, φ)` by regressing each user's transform onto their target
/// representation, one user per example.
pub fn train_meta_mapping(
    model: &mut MetaBridge,
    contexts: &[UserContext],
    targets: &[MappingTarget],
    cfg: &TrainConfig,
    rng: &mut Rng,
) -> Result<BridgeTrainReport> {
    cfg.validate("meta")?;
    if targets.is_empty() {
        return Err(Error::NoSupervision("no overlapping users to map".into()));
    }
    let mut adam = Adam::new(cfg.lr);
    let mut grads = model.zeros_like();
    let mut order: Vec<usize> = (0..targets.len()).collect();
    let mut counter = Counter::new(targets.len());
    let mut trace = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(rng);
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<MappingTarget> = chunk
                .iter()
                .map(|&i| {
                    counter.hit(i);
                    targets[i].clone()
                })
                .collect();
            for g in grads.params_mut() {
                g.fill(0.0);
            }
            let loss = mapping_oriented_loss(model, contexts, &batch, Some(&mut grads))?;
            check_loss(epoch, loss)?;
            adam.step(&mut model.params_mut(), &grads.params())?;
        }
        let loss = mapping_oriented_loss(model, contexts, targets, None)?;
        check_loss(epoch, loss)?;
        trace.push(loss);
    }
    Ok(counter.report(trace))
}

/// Fits one `k×k` bridge for all users by Adam on the summed squared
/// mapping error.
pub fn train_common_bridge(
    sources: &[Vec<f64>],
    targets: &[Vec<f64>],
    dim: usize,
    cfg: &TrainConfig,
    rng: &mut Rng,
) -> Result<(CommonBridge, BridgeTrainReport)> {
    cfg.validate("bridge")?;
    crate::error::check_len("common bridge pairs", sources.len(), targets.len())?;
    if sources.is_empty() {
        return Err(Error::NoSupervision("no overlapping users to map".into()));
    }
    let mut w = Dense2D::zeros(dim, dim);
    init_uniform(w.values_mut(), dim, rng);
    let mut grad = Dense2D::zeros(dim, dim);
    let mut adam = Adam::new(cfg.lr);
    let mut order: Vec<usize> = (0..sources.len()).collect();
    let mut counter = Counter::new(sources.len());
    let mut trace = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(rng);
        for chunk in order.chunks(cfg.batch_size) {
            let (s, t): (Vec<Vec<f64>>, Vec<Vec<f64>>) = chunk
                .iter()
                .map(|&i| {
                    counter.hit(i);
                    (sources[i].clone(), targets[i].clone())
                })
                .unzip();
            grad.values_mut().fill(0.0);
            let loss = common_mapping_loss(&w, &s, &t, Some(&mut grad))?;
            check_loss(epoch, loss)?;
            adam.step(&mut [w.values_mut()], &[grad.values()])?;
        }
        let loss = common_mapping_loss(&w, sources, targets, None)?;
        check_loss(epoch, loss)?;
        trace.push(loss);
    }
    Ok((CommonBridge { matrix: w }, counter.report(trace)))
}
