use std::collections::BTreeMap;

use super::{MetaBridge, UserContext};
use crate::error::check_len;
use crate::nn::{dot, Dense2D};
use crate::{Error, Result};

/// One target rating of an overlapping user. `user` indexes the context
/// slice and `item` the target item representations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaskSample {
    pub user: usize,
    pub item: usize,
    pub rating: f64,
}

/// Target-domain representation an overlapping user's transform should hit.
#[derive(Debug, Clone, PartialEq)]
pub struct MappingTarget {
    pub user: usize,
    pub target: Vec<f64>,
}

/// Mean over `batch` of `(r - f_u(u_src)·q_item)²`.
///
/// Only `(θ, φ)` receive gradients; source and target embeddings are
/// constants here. Each user's bridge is generated once per call.
pub fn task_oriented_loss(
    model: &MetaBridge,
    contexts: &[UserContext],
    item_reps: &[Vec<f64>],
    batch: &[TaskSample],
    mut grads: Option<&mut MetaBridge>,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::Empty("task-oriented batch"));
    }
    let k = model.dim();
    let mut by_user: BTreeMap<usize, Vec<&TaskSample>> = BTreeMap::new();
    for s in batch {
        if s.user >= contexts.len() {
            return Err(Error::IndexOutOfRange {
                what: "user contexts",
                index: s.user,
                len: contexts.len(),
            });
        }
        if s.item >= item_reps.len() {
            return Err(Error::IndexOutOfRange {
                what: "target items",
                index: s.item,
                len: item_reps.len(),
            });
        }
        by_user.entry(s.user).or_default().push(s);
    }

    let scale = 2.0 / batch.len() as f64;
    let mut total = 0.0;
    for (user, samples) in by_user {
        let ctx = &contexts[user];
        let fwd = model.forward_user(ctx)?;
        let mut d_transformed = vec![0.0; k];
        for s in samples {
            let q = &item_reps[s.item];
            check_len("target item representation", k, q.len())?;
            let err = dot(&fwd.transformed, q) - s.rating;
            total += err * err;
            crate::nn::axpy(scale * err, q, &mut d_transformed);
        }
        if let Some(g) = grads.as_deref_mut() {
            model.backward_user(ctx, &fwd, &d_transformed, g)?;
        }
    }
    Ok(total / batch.len() as f64)
}

/// `Σ_u ||f_u(u_src) - u_tgt||²` for the meta-generated bridges.
pub fn mapping_oriented_loss(
    model: &MetaBridge,
    contexts: &[UserContext],
    targets: &[MappingTarget],
    mut grads: Option<&mut MetaBridge>,
) -> Result<f64> {
    let mut total = 0.0;
    for t in targets {
        let ctx = contexts.get(t.user).ok_or(Error::IndexOutOfRange {
            what: "user contexts",
            index: t.user,
            len: contexts.len(),
        })?;
        check_len("mapping target", model.dim(), t.target.len())?;
        let fwd = model.forward_user(ctx)?;
        let diff: Vec<f64> = fwd
            .transformed
            .iter()
            .zip(&t.target)
            .map(|(a, b)| a - b)
            .collect();
        total += dot(&diff, &diff);
        if let Some(g) = grads.as_deref_mut() {
            let d: Vec<f64> = diff.iter().map(|x| 2.0 * x).collect();
            model.backward_user(ctx, &fwd, &d, g)?;
        }
    }
    Ok(total)
}

/// `Σ_u ||W·u_src - u_tgt||²` for one shared bridge, with `dL/dW` added
/// into `grad`.
pub fn common_mapping_loss(
    bridge: &Dense2D,
    sources: &[Vec<f64>],
    targets: &[Vec<f64>],
    grad: Option<&mut Dense2D>,
) -> Result<f64> {
    check_len("common bridge pairs", sources.len(), targets.len())?;
    let k = bridge.rows();
    let mut grad = grad;
    let mut total = 0.0;
    for (s, t) in sources.iter().zip(targets) {
        check_len("target representation", k, t.len())?;
        let pred = super::apply_bridge(bridge, s)?;
        for i in 0..k {
            let diff = pred[i] - t[i];
            total += diff * diff;
            if let Some(g) = grad.as_deref_mut() {
                let row = &mut g.values_mut()[i * k..(i + 1) * k];
                crate::nn::axpy(2.0 * diff, s, row);
            }
        }
    }
    Ok(total)
}
