use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{DomainModel, EmbeddingTable, Head, ModelKind};
use crate::data::{DomainDataset, Rating};
use crate::nn::{axpy, dot, Activation, Adam, Parameters};
use crate::rng::Rng;
use crate::{Error, Result};

/// Mini-batch Adam settings shared by every training loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    /// Stop after this many epochs without improvement of the train loss.
    pub patience: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            lr: 0.01,
            batch_size: 512,
            patience: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, name: &'static str) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::invalid(name, "batch_size must be >= 1"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::invalid(name, format!("lr {} must be positive", self.lr)));
        }
        Ok(())
    }
}

/// Tracks the best loss seen and signals when patience runs out.
pub(crate) struct EarlyStop {
    patience: Option<usize>,
    best: f64,
    since_best: usize,
}

impl EarlyStop {
    pub(crate) fn new(patience: Option<usize>) -> Self {
        Self {
            patience,
            best: f64::INFINITY,
            since_best: 0,
        }
    }

    pub(crate) fn observe(&mut self, epoch: usize, loss: f64) -> Result<bool> {
        if !loss.is_finite() {
            return Err(Error::Diverged { epoch, loss });
        }
        if loss < self.best {
            self.best = loss;
            self.since_best = 0;
        } else {
            self.since_best += 1;
        }
        Ok(matches!(self.patience, Some(p) if self.since_best >= p))
    }
}

#[derive(Debug, Clone)]
pub struct Pretrained {
    pub model: DomainModel,
    /// Full-pass train MSE after each epoch.
    pub trace: Vec<f64>,
}

/// Mean squared error of `model` over the selected ratings.
pub fn mse(model: &DomainModel, ratings: &[Rating], indices: &[usize]) -> Result<f64> {
    if indices.is_empty() {
        return Err(Error::Empty("ratings for mse"));
    }
    let mut total = 0.0;
    for &i in indices {
        let r = &ratings[i];
        total += (r.rating - model.score(r.user, r.item)?).powi(2);
    }
    Ok(total / indices.len() as f64)
}

/// Mean of `(r - score)²` over `batch`; gradients of that mean are added
/// into `grads`, which must have the same shapes as `model`.
pub fn batch_loss_and_grad(
    model: &DomainModel,
    batch: &[Rating],
    grads: &mut DomainModel,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::Empty("batch"));
    }
    let scale = 2.0 / batch.len() as f64;
    let mut loss = 0.0;
    for r in batch {
        model.check_user(r.user)?;
        model.check_item(r.item)?;
        let u = model.users.row(r.user);
        let v = model.items.row(r.item);
        match (&model.head, &mut grads.head) {
            (Head::Mf, Head::Mf) => {
                let err = dot(u, v) - r.rating;
                loss += err * err;
                let g = scale * err;
                axpy(g, v, grads.users.row_mut(r.user));
                axpy(g, u, grads.items.row_mut(r.item));
            }
            (Head::Gmf { weights }, Head::Gmf { weights: gw }) => {
                let pred: f64 = (0..u.len()).map(|d| weights[d] * u[d] * v[d]).sum();
                let err = pred - r.rating;
                loss += err * err;
                let g = scale * err;
                let gu = grads.users.row_mut(r.user);
                for d in 0..u.len() {
                    gu[d] += g * weights[d] * v[d];
                }
                let gv = grads.items.row_mut(r.item);
                for d in 0..u.len() {
                    gv[d] += g * weights[d] * u[d];
                }
                for d in 0..u.len() {
                    gw[d] += g * u[d] * v[d];
                }
            }
            (
                Head::TwoTower { user_net, item_net },
                Head::TwoTower {
                    user_net: g_user_net,
                    item_net: g_item_net,
                },
            ) => {
                let cu = user_net.forward_cached(u)?;
                let cv = item_net.forward_cached(v)?;
                let err = dot(&cu.output, &cv.output) - r.rating;
                loss += err * err;
                let g = scale * err;
                let d_a: Vec<f64> = cv.output.iter().map(|b| g * b).collect();
                let d_b: Vec<f64> = cu.output.iter().map(|a| g * a).collect();
                let du = user_net.backward(u, &cu, &d_a, g_user_net)?;
                let dv = item_net.backward(v, &cv, &d_b, g_item_net)?;
                axpy(1.0, &du, grads.users.row_mut(r.user));
                axpy(1.0, &dv, grads.items.row_mut(r.item));
            }
            _ => return Err(Error::invalid("grads", "head kind differs from model")),
        }
    }
    Ok(loss / batch.len() as f64)
}

#[derive(Clone, Copy, PartialEq)]
enum Trainable {
    All,
    UsersOnly,
}

fn train_loop(
    model: &mut DomainModel,
    ratings: &[Rating],
    indices: &[usize],
    cfg: &TrainConfig,
    rng: &mut Rng,
    which: Trainable,
) -> Result<Vec<f64>> {
    cfg.validate("train")?;
    let mut adam = Adam::new(cfg.lr);
    let mut grads = model.zeros_like();
    let mut order = indices.to_vec();
    let mut batch = Vec::with_capacity(cfg.batch_size);
    let mut trace = Vec::with_capacity(cfg.epochs);
    let mut stop = EarlyStop::new(cfg.patience);
    for epoch in 0..cfg.epochs {
        order.shuffle(rng);
        for chunk in order.chunks(cfg.batch_size) {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| ratings[i]));
            for g in grads.params_mut() {
                g.fill(0.0);
            }
            let loss = batch_loss_and_grad(model, &batch, &mut grads)?;
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch, loss });
            }
            match which {
                Trainable::All => {
                    let g = grads.params();
                    adam.step(&mut model.params_mut(), &g)?;
                }
                Trainable::UsersOnly => {
                    adam.step(&mut [model.users.values_mut()], &[grads.users.values()])?;
                }
            }
        }
        let loss = mse(model, ratings, indices)?;
        trace.push(loss);
        log::debug!("epoch {epoch}: train mse {loss:.6}");
        if stop.observe(epoch, loss)? {
            break;
        }
    }
    Ok(trace)
}

/// Fits a fresh model on the selected ratings of `dataset`.
///
/// The model covers every user and item of the dataset's id maps; rows that
/// never appear in `indices` keep their random initialization.
pub fn pretrain(
    dataset: &DomainDataset,
    indices: &[usize],
    kind: ModelKind,
    dim: usize,
    activation: Activation,
    cfg: &TrainConfig,
    rng: &mut Rng,
) -> Result<Pretrained> {
    if indices.is_empty() {
        return Err(Error::Empty("pre-training ratings"));
    }
    if dim == 0 {
        return Err(Error::invalid("k", "embedding dimension must be >= 1"));
    }
    let mut model = DomainModel::new(
        kind,
        dataset.users.len(),
        dataset.items.len(),
        dim,
        activation,
        rng,
    );
    let trace = train_loop(&mut model, &dataset.ratings, indices, cfg, rng, Trainable::All)?;
    Ok(Pretrained { model, trace })
}

/// Fits only user rows on the selected ratings, with items and head fixed.
pub fn fold_in_users(
    model: &mut DomainModel,
    dataset: &DomainDataset,
    indices: &[usize],
    cfg: &TrainConfig,
    rng: &mut Rng,
) -> Result<Vec<f64>> {
    if indices.is_empty() {
        return Ok(Vec::new());
    }
    train_loop(model, &dataset.ratings, indices, cfg, rng, Trainable::UsersOnly)
}

/// One fine-tuning rating addressed to a representation slot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FineTuneSample {
    pub slot: usize,
    pub item: usize,
    pub rating: f64,
}

/// Adjusts free user representations (one row of `reps` per slot) on the
/// given ratings, scoring each as `rep · item_representation`. Item
/// embeddings of `model` are updated too when `train_items` is set; the
/// head parameters stay fixed.
pub fn fine_tune_representations(
    model: &mut DomainModel,
    reps: &mut EmbeddingTable,
    samples: &[FineTuneSample],
    cfg: &TrainConfig,
    train_items: bool,
    rng: &mut Rng,
) -> Result<Vec<f64>> {
    if cfg.epochs == 0 || samples.is_empty() {
        return Ok(Vec::new());
    }
    cfg.validate("fine_tune")?;
    crate::error::check_len("fine-tune representation dim", model.dim(), reps.dim())?;
    for s in samples {
        if s.slot >= reps.count() {
            return Err(Error::IndexOutOfRange {
                what: "representation slots",
                index: s.slot,
                len: reps.count(),
            });
        }
        model.check_item(s.item)?;
    }

    let loss_of = |model: &DomainModel, reps: &EmbeddingTable, cache: &Option<Vec<Vec<f64>>>| {
        let mut total = 0.0;
        for s in samples {
            let q = match cache {
                Some(c) => c[s.item].clone(),
                None => model.item_representation(s.item)?,
            };
            total += (s.rating - dot(reps.row(s.slot), &q)).powi(2);
        }
        Ok::<f64, Error>(total / samples.len() as f64)
    };

    let mut frozen_items = if train_items {
        None
    } else {
        Some(model.item_representations()?)
    };
    let mut adam = Adam::new(cfg.lr);
    let mut g_reps = EmbeddingTable::zeros(reps.count(), reps.dim());
    let mut g_items = EmbeddingTable::zeros(model.items.count(), model.dim());
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut trace = Vec::with_capacity(cfg.epochs);
    let mut stop = EarlyStop::new(cfg.patience);

    for epoch in 0..cfg.epochs {
        order.shuffle(rng);
        for chunk in order.chunks(cfg.batch_size) {
            g_reps.values_mut().fill(0.0);
            g_items.values_mut().fill(0.0);
            let scale = 2.0 / chunk.len() as f64;
            for &n in chunk {
                let s = samples[n];
                let rep = reps.row(s.slot).to_vec();
                let q = match &frozen_items {
                    Some(c) => c[s.item].clone(),
                    None => model.item_representation(s.item)?,
                };
                let g = scale * (dot(&rep, &q) - s.rating);
                axpy(g, &q, g_reps.row_mut(s.slot));
                if train_items {
                    let dv = item_embedding_grad(model, s.item, &rep, g)?;
                    axpy(1.0, &dv, g_items.row_mut(s.item));
                }
            }
            if train_items {
                adam.step(
                    &mut [reps.values_mut(), model.items.values_mut()],
                    &[g_reps.values(), g_items.values()],
                )?;
            } else {
                adam.step(&mut [reps.values_mut()], &[g_reps.values()])?;
            }
        }
        if train_items {
            frozen_items = None;
        }
        let loss = loss_of(model, reps, &frozen_items)?;
        trace.push(loss);
        if stop.observe(epoch, loss)? {
            break;
        }
    }
    Ok(trace)
}

/// `g · d(rep · item_rep(v)) / dv` for the item embedding `v`.
fn item_embedding_grad(model: &DomainModel, item: usize, rep: &[f64], g: f64) -> Result<Vec<f64>> {
    let v = model.items.row(item);
    match &model.head {
        Head::Mf => Ok(rep.iter().map(|x| g * x).collect()),
        Head::Gmf { weights } => Ok(rep
            .iter()
            .zip(weights)
            .map(|(x, w)| g * w * x)
            .collect()),
        Head::TwoTower { item_net, .. } => {
            let cache = item_net.forward_cached(v)?;
            let d_out: Vec<f64> = rep.iter().map(|x| g * x).collect();
            let mut scratch = item_net.zeros_like();
            item_net.backward(v, &cache, &d_out, &mut scratch)
        }
    }
}
