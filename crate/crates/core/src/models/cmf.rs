use super::{pretrain, DomainModel, EmbeddingTable, ModelKind, TrainConfig};
use crate::data::{DomainDataset, IdMap, Rating};
use crate::nn::Activation;
use crate::rng::Rng;
use crate::Result;

/// Collective factorization: one user table shared by both domains and a
/// separate item table for each.
#[derive(Debug, Clone)]
pub struct CmfModel {
    /// Union of source and target users (source users first).
    pub users: IdMap,
    /// Shared users; items are source items followed by target items.
    pub joint: DomainModel,
    pub n_source_items: usize,
    pub trace: Vec<f64>,
}

impl CmfModel {
    /// Target-domain model: shared users, target items indexed as in the
    /// target dataset.
    pub fn target_view(&self) -> DomainModel {
        let k = self.joint.dim();
        let n_tgt = self.joint.items.count() - self.n_source_items;
        let start = self.n_source_items * k;
        let rows: Vec<Vec<f64>> = self.joint.items.values()[start..]
            .chunks(k)
            .map(<[f64]>::to_vec)
            .collect();
        let items = if n_tgt == 0 {
            EmbeddingTable::zeros(0, k)
        } else {
            EmbeddingTable::from_rows(&rows).expect("uniform rows")
        };
        DomainModel {
            users: self.joint.users.clone(),
            items,
            head: self.joint.head.clone(),
        }
    }

    pub fn user_index(&self, external_id: &str) -> Option<usize> {
        self.users.index(external_id)
    }
}

/// Trains the shared-user model on the selected source and target ratings
/// pooled into one corpus.
#[allow(clippy::too_many_arguments)]
pub fn cmf_train(
    src: &DomainDataset,
    src_indices: &[usize],
    tgt: &DomainDataset,
    tgt_indices: &[usize],
    kind: ModelKind,
    dim: usize,
    activation: Activation,
    cfg: &TrainConfig,
    rng: &mut Rng,
) -> Result<CmfModel> {
    let mut users = IdMap::new();
    for id in src.users.ids().iter().chain(tgt.users.ids()) {
        users.intern(id);
    }
    let mut items = IdMap::new();
    for id in src.items.ids() {
        items.intern(&format!("s:{id}"));
    }
    for id in tgt.items.ids() {
        items.intern(&format!("t:{id}"));
    }
    let n_source_items = src.items.len();

    let mut ratings = Vec::with_capacity(src_indices.len() + tgt_indices.len());
    for &i in src_indices {
        let r = src.ratings[i];
        ratings.push(Rating {
            user: users.index(src.users.id(r.user).expect("valid")).expect("interned"),
            ..r
        });
    }
    for &i in tgt_indices {
        let r = tgt.ratings[i];
        ratings.push(Rating {
            user: users.index(tgt.users.id(r.user).expect("valid")).expect("interned"),
            item: r.item + n_source_items,
            ..r
        });
    }
    let joint_ds = DomainDataset {
        users: users.clone(),
        items,
        ratings,
    };
    let all: Vec<usize> = (0..joint_ds.ratings.len()).collect();
    let fitted = pretrain(&joint_ds, &all, kind, dim, activation, cfg, rng)?;
    Ok(CmfModel {
        users,
        joint: fitted.model,
        n_source_items,
        trace: fitted.trace,
    })
}
