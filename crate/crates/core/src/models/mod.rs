//! Per-domain latent-factor scorers.
//!
//! All three heads share one shape: a user representation dotted with an
//! item representation.
//!
//! | head       | user representation | item representation |
//! |------------|---------------------|---------------------|
//! | `mf`       | `u`                 | `v`                 |
//! | `gmf`      | `u`                 | `w ⊙ v`             |
//! | `two_tower`| `user_net(u)`       | `item_net(v)`       |
//!
//! Bridges operate on the user representation.

mod cmf;
mod embedding;
mod train;

use serde::{Deserialize, Serialize};

pub use cmf::{cmf_train, CmfModel};
pub use embedding::EmbeddingTable;
pub use train::{
    batch_loss_and_grad, fine_tune_representations, fold_in_users, mse, pretrain, FineTuneSample,
    Pretrained, TrainConfig,
};

use crate::nn::{dot, Activation, Checkpoint, Parameters, Tensor, TwoLayerNet};
use crate::rng::Rng;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    #[default]
    Mf,
    Gmf,
    TwoTower,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Mf => "mf",
            ModelKind::Gmf => "gmf",
            ModelKind::TwoTower => "two_tower",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[allow(clippy::large_enum_variant)]
pub enum Head {
    Mf,
    Gmf { weights: Vec<f64> },
    TwoTower { user_net: TwoLayerNet, item_net: TwoLayerNet },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DomainModel {
    pub users: EmbeddingTable,
    pub items: EmbeddingTable,
    pub head: Head,
}

impl DomainModel {
    /// Randomly initialized model. Towers are sized `k → 2k → k`; GMF
    /// weights start at 1 so the head begins as plain MF.
    pub fn new(
        kind: ModelKind,
        n_users: usize,
        n_items: usize,
        dim: usize,
        activation: Activation,
        rng: &mut Rng,
    ) -> Self {
        let users = EmbeddingTable::random(n_users, dim, rng);
        let items = EmbeddingTable::random(n_items, dim, rng);
        let head = match kind {
            ModelKind::Mf => Head::Mf,
            ModelKind::Gmf => Head::Gmf {
                weights: vec![1.0; dim],
            },
            ModelKind::TwoTower => Head::TwoTower {
                user_net: TwoLayerNet::random(dim, 2 * dim, dim, activation, rng),
                item_net: TwoLayerNet::random(dim, 2 * dim, dim, activation, rng),
            },
        };
        Self { users, items, head }
    }

    pub fn kind(&self) -> ModelKind {
        match self.head {
            Head::Mf => ModelKind::Mf,
            Head::Gmf { .. } => ModelKind::Gmf,
            Head::TwoTower { .. } => ModelKind::TwoTower,
        }
    }

    pub fn dim(&self) -> usize {
        self.users.dim()
    }

    /// All-zero copy, used to accumulate gradients.
    pub fn zeros_like(&self) -> Self {
        let head = match &self.head {
            Head::Mf => Head::Mf,
            Head::Gmf { weights } => Head::Gmf {
                weights: vec![0.0; weights.len()],
            },
            Head::TwoTower { user_net, item_net } => Head::TwoTower {
                user_net: user_net.zeros_like(),
                item_net: item_net.zeros_like(),
            },
        };
        Self {
            users: EmbeddingTable::zeros(self.users.count(), self.users.dim()),
            items: EmbeddingTable::zeros(self.items.count(), self.items.dim()),
            head,
        }
    }

    fn check_user(&self, user: usize) -> Result<()> {
        if user < self.users.count() {
            Ok(())
        } else {
            Err(Error::IndexOutOfRange {
                what: "users",
                index: user,
                len: self.users.count(),
            })
        }
    }

    fn check_item(&self, item: usize) -> Result<()> {
        if item < self.items.count() {
            Ok(())
        } else {
            Err(Error::IndexOutOfRange {
                what: "items",
                index: item,
                len: self.items.count(),
            })
        }
    }

    /// Representation the bridge transforms: the embedding row for MF/GMF,
    /// the user-tower output for two-tower.
    pub fn user_representation(&self, user: usize) -> Result<Vec<f64>> {
        self.check_user(user)?;
        self.represent_user(self.users.row(user))
    }

    /// Representation of an arbitrary user embedding vector.
    pub fn represent_user(&self, embedding: &[f64]) -> Result<Vec<f64>> {
        crate::error::check_len("user embedding", self.dim(), embedding.len())?;
        match &self.head {
            Head::Mf | Head::Gmf { .. } => Ok(embedding.to_vec()),
            Head::TwoTower { user_net, .. } => user_net.forward(embedding),
        }
    }

    pub fn item_representation(&self, item: usize) -> Result<Vec<f64>> {
        self.check_item(item)?;
        let v = self.items.row(item);
        match &self.head {
            Head::Mf => Ok(v.to_vec()),
            Head::Gmf { weights } => Ok(weights.iter().zip(v).map(|(w, x)| w * x).collect()),
            Head::TwoTower { item_net, .. } => item_net.forward(v),
        }
    }

    /// Item representations for every item, in index order.
    pub fn item_representations(&self) -> Result<Vec<Vec<f64>>> {
        (0..self.items.count())
            .map(|j| self.item_representation(j))
            .collect()
    }

    pub fn score(&self, user: usize, item: usize) -> Result<f64> {
        let u = self.user_representation(user)?;
        self.score_representation(&u, item)
    }

    /// Score of a user representation against an item.
    pub fn score_representation(&self, user_rep: &[f64], item: usize) -> Result<f64> {
        crate::error::check_len("user representation", self.dim(), user_rep.len())?;
        Ok(dot(user_rep, &self.item_representation(item)?))
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::new();
        ck.insert("users", self.users.to_tensor());
        ck.insert("items", self.items.to_tensor());
        match &self.head {
            Head::Mf => {}
            Head::Gmf { weights } => ck.insert("gmf_weights", Tensor::vector(weights)),
            Head::TwoTower { user_net, item_net } => {
                ck.merge_prefixed("user_net", user_net.to_checkpoint());
                ck.merge_prefixed("item_net", item_net.to_checkpoint());
            }
        }
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let users = EmbeddingTable::from_tensor(ck.get("users")?)?;
        let items = EmbeddingTable::from_tensor(ck.get("items")?)?;
        crate::error::check_len("checkpoint item dim", users.dim(), items.dim())?;
        let head = if ck.contains("gmf_weights") {
            let weights = ck.get("gmf_weights")?.data.clone();
            crate::error::check_len("checkpoint gmf weights", users.dim(), weights.len())?;
            Head::Gmf { weights }
        } else if ck.contains("user_net.w1") {
            Head::TwoTower {
                user_net: TwoLayerNet::from_checkpoint(&ck.sub("user_net"))?,
                item_net: TwoLayerNet::from_checkpoint(&ck.sub("item_net"))?,
            }
        } else {
            Head::Mf
        };
        Ok(Self { users, items, head })
    }
}

impl Parameters for DomainModel {
    fn params(&self) -> Vec<&[f64]> {
        let mut out = vec![self.users.values(), self.items.values()];
        match &self.head {
            Head::Mf => {}
            Head::Gmf { weights } => out.push(weights),
            Head::TwoTower { user_net, item_net } => {
                out.extend(user_net.params());
                out.extend(item_net.params());
            }
        }
        out
    }

    fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = vec![self.users.values_mut(), self.items.values_mut()];
        match &mut self.head {
            Head::Mf => {}
            Head::Gmf { weights } => out.push(weights),
            Head::TwoTower { user_net, item_net } => {
                out.extend(user_net.params_mut());
                out.extend(item_net.params_mut());
            }
        }
        out
    }
}
