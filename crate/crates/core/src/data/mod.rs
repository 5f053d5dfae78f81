//! Rating logs for a source and a target domain.
//!
//! Each domain gets its own dense user and item index spaces. Users are
//! matched across domains by external id; items never are.

mod load;
mod split;

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

pub use load::{load_domain, Format};
pub use split::{make_split, make_target_only_split, SplitPlan, TestUser};

use crate::{Error, Result};

/// One interaction as read from a log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatingTriple {
    pub user: String,
    pub item: String,
    pub rating: f64,
    pub timestamp: u64,
}

/// An interaction with dense indices.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rating {
    pub user: usize,
    pub item: usize,
    pub rating: f64,
    pub timestamp: u64,
}

/// Bijection between external ids and contiguous indices `0..len`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IdMap {
    forward: HashMap<String, usize>,
    backward: Vec<String>,
}

impl IdMap {
    pub fn new() -> Self {
        Self::default()
    }

    /// Index of `id`, assigning the next free one if unseen.
    pub fn intern(&mut self, id: &str) -> usize {
        if let Some(&i) = self.forward.get(id) {
            return i;
        }
        let i = self.backward.len();
        self.forward.insert(id.to_string(), i);
        self.backward.push(id.to_string());
        i
    }

    pub fn index(&self, id: &str) -> Option<usize> {
        self.forward.get(id).copied()
    }

    pub fn id(&self, index: usize) -> Option<&str> {
        self.backward.get(index).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.backward.len()
    }

    pub fn is_empty(&self) -> bool {
        self.backward.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.backward
    }

    pub fn contains(&self, id: &str) -> bool {
        self.forward.contains_key(id)
    }
}

impl Serialize for IdMap {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.backward.serialize(s)
    }
}

impl<'de> Deserialize<'de> for IdMap {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let ids = Vec::<String>::deserialize(d)?;
        let mut map = IdMap::new();
        for id in &ids {
            if map.contains(id) {
                return Err(serde::de::Error::custom(format!("duplicate id `{id}`")));
            }
            map.intern(id);
        }
        Ok(map)
    }
}

/// A user's source-domain items in time order.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionSequence {
    pub user: usize,
    pub items: Vec<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DomainDataset {
    pub users: IdMap,
    pub items: IdMap,
    pub ratings: Vec<Rating>,
}

impl DomainDataset {
    pub fn from_triples<I>(triples: I) -> Result<Self>
    where
        I: IntoIterator<Item = RatingTriple>,
    {
        let mut ds = DomainDataset::default();
        for (n, t) in triples.into_iter().enumerate() {
            if !(0.0..=5.0).contains(&t.rating) {
                return Err(Error::RatingOutOfRange {
                    count: 1,
                    first_line: n + 1,
                });
            }
            ds.push(&t);
        }
        Ok(ds)
    }

    pub(crate) fn push(&mut self, t: &RatingTriple) {
        let user = self.users.intern(&t.user);
        let item = self.items.intern(&t.item);
        self.ratings.push(Rating {
            user,
            item,
            rating: t.rating,
            timestamp: t.timestamp,
        });
    }

    pub fn len(&self) -> usize {
        self.ratings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ratings.is_empty()
    }

    /// Rating indices per user, ordered by timestamp with file order
    /// breaking ties.
    pub fn ratings_by_user(&self) -> Vec<Vec<usize>> {
        let mut by_user = vec![Vec::new(); self.users.len()];
        for (i, r) in self.ratings.iter().enumerate() {
            by_user[r.user].push(i);
        }
        for list in &mut by_user {
            // stable: equal timestamps keep their original order
            list.sort_by_key(|&i| self.ratings[i].timestamp);
        }
        by_user
    }

    /// Time-ordered item sequences for every user.
    pub fn sequences(&self) -> Vec<InteractionSequence> {
        self.ratings_by_user()
            .into_iter()
            .enumerate()
            .map(|(user, idx)| InteractionSequence {
                user,
                items: idx.iter().map(|&i| self.ratings[i].item).collect(),
            })
            .collect()
    }

    pub fn triple(&self, index: usize) -> RatingTriple {
        let r = &self.ratings[index];
        RatingTriple {
            user: self.users.id(r.user).unwrap_or_default().to_string(),
            item: self.items.id(r.item).unwrap_or_default().to_string(),
            rating: r.rating,
            timestamp: r.timestamp,
        }
    }
}

/// External ids of users present in both domains.
pub fn overlap_users(src: &DomainDataset, tgt: &DomainDataset) -> BTreeSet<String> {
    src.users
        .ids()
        .iter()
        .filter(|id| tgt.users.contains(id))
        .cloned()
        .collect()
}

/// Fails on the first item id found in both domains.
pub fn check_disjoint_items(src: &DomainDataset, tgt: &DomainDataset) -> Result<()> {
    match src.items.ids().iter().find(|id| tgt.items.contains(id)) {
        Some(id) => Err(Error::SharedItems(id.clone())),
        None => Ok(()),
    }
}
