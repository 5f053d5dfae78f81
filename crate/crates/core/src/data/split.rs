use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{check_disjoint_items, overlap_users, DomainDataset};
use crate::{Error, Result};

/// A held-out overlapping user and the time-split of their target ratings.
///
/// `cold` and `warm` index into the target dataset's `ratings`. Every cold
/// rating is no later than every warm rating.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestUser {
    pub user: String,
    pub cold: Vec<usize>,
    pub warm: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub beta: f64,
    pub seed: u64,
    pub n_overlap: usize,
    /// Overlapping users whose target ratings supervise the bridge.
    pub train_overlap_users: Vec<String>,
    pub test_users: Vec<TestUser>,
    /// Test users with fewer than two target ratings (empty warm set).
    pub short_users: Vec<String>,
}

impl SplitPlan {
    pub fn test_user_ids(&self) -> BTreeSet<&str> {
        self.test_users.iter().map(|t| t.user.as_str()).collect()
    }

    /// Indices of target ratings that belong to no test user.
    pub fn target_training_pool(&self, tgt: &DomainDataset) -> Vec<usize> {
        let held_out: BTreeSet<usize> = self
            .test_users
            .iter()
            .filter_map(|t| tgt.users.index(&t.user))
            .collect();
        (0..tgt.ratings.len())
            .filter(|&i| !held_out.contains(&tgt.ratings[i].user))
            .collect()
    }

    /// Indices of source ratings that belong to no test user.
    pub fn source_without_test_users(&self, src: &DomainDataset) -> Vec<usize> {
        let held_out: BTreeSet<usize> = self
            .test_users
            .iter()
            .filter_map(|t| src.users.index(&t.user))
            .collect();
        (0..src.ratings.len())
            .filter(|&i| !held_out.contains(&src.ratings[i].user))
            .collect()
    }

    pub fn cold_indices(&self) -> Vec<usize> {
        self.test_users.iter().flat_map(|t| t.cold.iter().copied()).collect()
    }

    pub fn warm_indices(&self) -> Vec<usize> {
        self.test_users.iter().flat_map(|t| t.warm.iter().copied()).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Holds out `round(beta · |overlap|)` overlapping users, clamped to
/// `1..=|overlap|-1`, chosen uniformly with a seeded shuffle. Each test
/// user's target ratings are ordered by time; the earlier `ceil(n/2)` form
/// the cold set and the rest the warm set.
pub fn make_split(src: &DomainDataset, tgt: &DomainDataset, beta: f64, seed: u64) -> Result<SplitPlan> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::invalid("beta", format!("{beta} is not in (0, 1)")));
    }
    check_disjoint_items(src, tgt)?;
    let overlap: Vec<String> = overlap_users(src, tgt).into_iter().collect();
    if overlap.len() < 2 {
        return Err(Error::NoSupervision(format!(
            "{} overlapping user(s); at least 2 are needed to split",
            overlap.len()
        )));
    }
    split_candidates(overlap, tgt, beta, seed)
}

/// Splits over every target user, for target-only runs without a source
/// domain.
pub fn make_target_only_split(tgt: &DomainDataset, beta: f64, seed: u64) -> Result<SplitPlan> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::invalid("beta", format!("{beta} is not in (0, 1)")));
    }
    let mut users: Vec<String> = tgt.users.ids().to_vec();
    users.sort();
    if users.len() < 2 {
        return Err(Error::NoSupervision(format!(
            "{} target user(s); at least 2 are needed to split",
            users.len()
        )));
    }
    split_candidates(users, tgt, beta, seed)
}

fn split_candidates(overlap: Vec<String>, tgt: &DomainDataset, beta: f64, seed: u64) -> Result<SplitPlan> {

    let n = overlap.len();
    let n_test = ((beta * n as f64).round() as usize).clamp(1, n - 1);
    let mut shuffled = overlap.clone();
    shuffled.shuffle(&mut crate::rng::stream(seed, "split.users"));
    let test: BTreeSet<String> = shuffled.into_iter().take(n_test).collect();

    let by_user = tgt.ratings_by_user();
    let mut test_users = Vec::with_capacity(n_test);
    let mut short_users = Vec::new();
    for id in &test {
        let idx = tgt.users.index(id).expect("overlap user present in target");
        let ordered = &by_user[idx];
        let n_cold = ordered.len().div_ceil(2);
        if ordered.len() < 2 {
            short_users.push(id.clone());
        }
        test_users.push(TestUser {
            user: id.clone(),
            cold: ordered[..n_cold].to_vec(),
            warm: ordered[n_cold..].to_vec(),
        });
    }
    let train_overlap_users = overlap.into_iter().filter(|u| !test.contains(u)).collect();

    Ok(SplitPlan {
        beta,
        seed,
        n_overlap: n,
        train_overlap_users,
        test_users,
        short_users,
    })
}
