//! Planted-factor data with a known source→target user map.
//!
//! Every user vector is `(a, z_1, …, z_{k-1})`: `a` scales an always-on
//! popularity dimension and the sign of `z_1` is the user's type. Items carry
//! the same layout and a group sign in `y_1`. In the source domain users
//! favour items of their own group, so the type can be read off their
//! history. Target vectors of overlapping users are `B_u · u^s`.

use std::collections::BTreeMap;

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{DomainDataset, RatingTriple};
use crate::rng::{stream, Rng};
use crate::{Error, Result};

const BASE: f64 = 1.581_138_830_084_189_8; // sqrt(2.5)
const FACTOR_SD: f64 = 0.6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BridgeFamily {
    /// `B_u = I + perturbation · G` for every user, `G` standard normal
    /// scaled by `1/sqrt(k)`.
    SharedLinear { perturbation: f64 },
    /// `B_u = diag(1, 1, d, …, d)` with `d = tanh(4 z_1)`, so users of the
    /// two types need opposite maps on the taste dimensions.
    PerUserLinear,
}

impl BridgeFamily {
    pub fn as_str(&self) -> &'static str {
        match self {
            BridgeFamily::SharedLinear { .. } => "shared_linear",
            BridgeFamily::PerUserLinear => "per_user_linear",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticSpec {
    /// Source users, overlapping ones included.
    pub n_users_src: usize,
    /// Target users, overlapping ones included.
    pub n_users_tgt: usize,
    pub n_overlap: usize,
    pub n_items_src: usize,
    pub n_items_tgt: usize,
    pub k_true: usize,
    pub ratings_per_user: usize,
    pub noise_sd: f64,
    pub bridge_family: BridgeFamily,
    /// Sampling weight of own-group source items relative to the other group.
    pub own_group_weight: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_users_src: 250,
            n_users_tgt: 250,
            n_overlap: 200,
            n_items_src: 100,
            n_items_tgt: 100,
            k_true: 6,
            ratings_per_user: 20,
            noise_sd: 0.1,
            bridge_family: BridgeFamily::PerUserLinear,
            own_group_weight: 3.0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(format!("synthetic spec: {m}")));
        if self.n_overlap > self.n_users_src.min(self.n_users_tgt) {
            return bad(format!(
                "n_overlap {} exceeds a domain's user count ({} / {})",
                self.n_overlap, self.n_users_src, self.n_users_tgt
            ));
        }
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return bad(format!("noise_sd {} must be finite and >= 0", self.noise_sd));
        }
        if self.k_true < 2 {
            return bad("k_true must be >= 2".into());
        }
        if self.ratings_per_user == 0 {
            return bad("ratings_per_user must be >= 1".into());
        }
        if self.ratings_per_user > self.n_items_src.min(self.n_items_tgt) {
            return bad(format!(
                "ratings_per_user {} exceeds a domain's item count",
                self.ratings_per_user
            ));
        }
        if !(self.own_group_weight > 0.0 && self.own_group_weight.is_finite()) {
            return bad("own_group_weight must be positive".into());
        }
        if let BridgeFamily::SharedLinear { perturbation } = self.bridge_family {
            if !perturbation.is_finite() {
                return bad("perturbation must be finite".into());
            }
        }
        Ok(())
    }
}

/// Generating factors, keyed by external id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedTruth {
    pub k: usize,
    pub source_users: BTreeMap<String, Vec<f64>>,
    pub target_users: BTreeMap<String, Vec<f64>>,
    pub source_items: BTreeMap<String, Vec<f64>>,
    pub target_items: BTreeMap<String, Vec<f64>>,
    /// Row-major `k×k` map of every overlapping user.
    pub user_bridges: BTreeMap<String, Vec<f64>>,
    /// The common map when the family is shared.
    pub shared_map: Option<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub source: DomainDataset,
    pub target: DomainDataset,
    pub truth: PlantedTruth,
}

/// External id, source factor with its type sign, target factor.
type PlannedUser = (String, Option<(Vec<f64>, f64)>, Option<Vec<f64>>);

fn normal(rng: &mut Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn draw_factor(k: usize, rng: &mut Rng) -> (Vec<f64>, f64) {
    let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
    let mut v = Vec::with_capacity(k);
    v.push(BASE * (1.0 + 0.05 * normal(rng)));
    v.push(sign * rng.random_range(0.5..1.0));
    for _ in 2..k {
        v.push(FACTOR_SD * normal(rng));
    }
    (v, sign)
}

fn matvec(m: &[f64], x: &[f64]) -> Vec<f64> {
    let k = x.len();
    (0..k)
        .map(|r| (0..k).map(|c| m[r * k + c] * x[c]).sum())
        .collect()
}

fn per_user_map(u: &[f64]) -> Vec<f64> {
    let k = u.len();
    let d = (4.0 * u[1]).tanh();
    let mut m = vec![0.0; k * k];
    for i in 0..k {
        m[i * k + i] = if i < 2 { 1.0 } else { d };
    }
    m
}

/// Weighted sampling without replacement by exponential keys.
fn sample_items(weights: &[f64], count: usize, rng: &mut Rng) -> Vec<usize> {
    let mut keyed: Vec<(f64, usize)> = weights
        .iter()
        .enumerate()
        .map(|(i, w)| {
            let u: f64 = rng.random_range(f64::MIN_POSITIVE..1.0);
            (-u.ln() / w, i)
        })
        .collect();
    keyed.sort_by(|a, b| a.0.total_cmp(&b.0));
    keyed.into_iter().take(count).map(|(_, i)| i).collect()
}

fn rate(user: &[f64], item: &[f64], noise_sd: f64, rng: &mut Rng) -> f64 {
    let dot: f64 = user.iter().zip(item).map(|(a, b)| a * b).sum();
    let noise = if noise_sd > 0.0 { noise_sd * normal(rng) } else { 0.0 };
    (dot + noise).clamp(0.0, 5.0)
}

pub fn generate_synthetic(spec: &SyntheticSpec, seed: u64) -> Result<SyntheticData> {
    spec.validate()?;
    let k = spec.k_true;
    let mut rng = stream(seed, "synthetic");

    let shared_map = match spec.bridge_family {
        BridgeFamily::SharedLinear { perturbation } => {
            let scale = perturbation / (k as f64).sqrt();
            let mut m = vec![0.0; k * k];
            for (i, v) in m.iter_mut().enumerate() {
                *v = scale * normal(&mut rng) + if i % (k + 1) == 0 { 1.0 } else { 0.0 };
            }
            Some(m)
        }
        BridgeFamily::PerUserLinear => None,
    };
    let bridge_for = |u: &[f64]| match &shared_map {
        Some(m) => m.clone(),
        None => per_user_map(u),
    };

    let draw_items = |n: usize, prefix: &str, rng: &mut Rng| {
        (0..n)
            .map(|j| {
                let (v, g) = draw_factor(k, rng);
                (format!("{prefix}{j:05}"), v, g)
            })
            .collect::<Vec<_>>()
    };
    let src_items = draw_items(spec.n_items_src, "sv", &mut rng);
    let tgt_items = draw_items(spec.n_items_tgt, "tv", &mut rng);

    let mut truth = PlantedTruth {
        k,
        source_users: BTreeMap::new(),
        target_users: BTreeMap::new(),
        source_items: src_items.iter().map(|(id, v, _)| (id.clone(), v.clone())).collect(),
        target_items: tgt_items.iter().map(|(id, v, _)| (id.clone(), v.clone())).collect(),
        user_bridges: BTreeMap::new(),
        shared_map: shared_map.clone(),
    };

    let mut users: Vec<PlannedUser> = Vec::new();
    for u in 0..spec.n_overlap {
        let (us, sign) = draw_factor(k, &mut rng);
        let b = bridge_for(&us);
        let ut = matvec(&b, &us);
        let id = format!("u{u:05}");
        truth.user_bridges.insert(id.clone(), b);
        users.push((id, Some((us, sign)), Some(ut)));
    }
    for u in 0..spec.n_users_src - spec.n_overlap {
        let f = draw_factor(k, &mut rng);
        users.push((format!("s{u:05}"), Some(f), None));
    }
    for u in 0..spec.n_users_tgt - spec.n_overlap {
        let (us, _) = draw_factor(k, &mut rng);
        let ut = matvec(&bridge_for(&us), &us);
        users.push((format!("t{u:05}"), None, Some(ut)));
    }

    let mut clock = 0u64;
    let mut src_triples = Vec::new();
    let mut tgt_triples = Vec::new();
    let uniform = vec![1.0; tgt_items.len()];
    for (id, src, tgt) in &users {
        if let Some((us, sign)) = src {
            let weights: Vec<f64> = src_items
                .iter()
                .map(|(_, _, g)| if g == sign { spec.own_group_weight } else { 1.0 })
                .collect();
            for j in sample_items(&weights, spec.ratings_per_user, &mut rng) {
                let (item, v, _) = &src_items[j];
                src_triples.push(RatingTriple {
                    user: id.clone(),
                    item: item.clone(),
                    rating: rate(us, v, spec.noise_sd, &mut rng),
                    timestamp: clock,
                });
                clock += 1;
            }
            truth.source_users.insert(id.clone(), us.clone());
        }
        if let Some(ut) = tgt {
            for j in sample_items(&uniform, spec.ratings_per_user, &mut rng) {
                let (item, v, _) = &tgt_items[j];
                tgt_triples.push(RatingTriple {
                    user: id.clone(),
                    item: item.clone(),
                    rating: rate(ut, v, spec.noise_sd, &mut rng),
                    timestamp: clock,
                });
                clock += 1;
            }
            truth.target_users.insert(id.clone(), ut.clone());
        }
    }

    Ok(SyntheticData {
        source: DomainDataset::from_triples(src_triples)?,
        target: DomainDataset::from_triples(tgt_triples)?,
        truth,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::overlap_users;

    fn small(family: BridgeFamily) -> SyntheticSpec {
        SyntheticSpec {
            n_users_src: 30,
            n_users_tgt: 25,
            n_overlap: 20,
            n_items_src: 40,
            n_items_tgt: 30,
            ratings_per_user: 8,
            bridge_family: family,
            ..SyntheticSpec::default()
        }
    }

    #[test]
    fn shapes_and_overlap() {
        let d = generate_synthetic(&small(BridgeFamily::PerUserLinear), 1).unwrap();
        assert_eq!(d.source.users.len(), 30);
        assert_eq!(d.target.users.len(), 25);
        assert_eq!(overlap_users(&d.source, &d.target).len(), 20);
        assert_eq!(d.source.len(), 30 * 8);
        assert_eq!(d.target.len(), 25 * 8);
        assert!(d.source.ratings.iter().all(|r| (0.0..=5.0).contains(&r.rating)));
        assert_eq!(d.truth.user_bridges.len(), 20);
    }

    #[test]
    fn noiseless_ratings_are_clipped_dot_products() {
        let mut spec = small(BridgeFamily::SharedLinear { perturbation: 0.3 });
        spec.noise_sd = 0.0;
        let d = generate_synthetic(&spec, 2).unwrap();
        for i in 0..d.target.len() {
            let t = d.target.triple(i);
            let u = &d.truth.target_users[&t.user];
            let v = &d.truth.target_items[&t.item];
            let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
            assert!((t.rating - dot.clamp(0.0, 5.0)).abs() < 1e-12);
        }
        let a = d.truth.shared_map.as_ref().unwrap();
        for (id, us) in &d.truth.source_users {
            if let Some(ut) = d.truth.target_users.get(id) {
                let mapped = matvec(a, us);
                for (x, y) in mapped.iter().zip(ut) {
                    assert!((x - y).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn per_user_maps_follow_type() {
        let d = generate_synthetic(&small(BridgeFamily::PerUserLinear), 3).unwrap();
        let k = d.truth.k;
        for (id, b) in &d.truth.user_bridges {
            let z1 = d.truth.source_users[id][1];
            let last = b[k * k - 1];
            assert!(last.signum() == z1.signum() && last.abs() > 0.95);
        }
    }

    #[test]
    fn source_histories_lean_to_own_group() {
        let d = generate_synthetic(&SyntheticSpec::default(), 4).unwrap();
        let (mut own, mut total) = (0usize, 0usize);
        for r in &d.source.ratings {
            let uid = d.source.users.id(r.user).unwrap();
            let iid = d.source.items.id(r.item).unwrap();
            let zs = d.truth.source_users[uid][1].signum();
            let ys = d.truth.source_items[iid][1].signum();
            own += (zs == ys) as usize;
            total += 1;
        }
        let share = own as f64 / total as f64;
        assert!(share > 0.65 && share < 0.85, "{share}");
    }

    #[test]
    fn deterministic_and_validated() {
        let spec = small(BridgeFamily::PerUserLinear);
        let a = generate_synthetic(&spec, 9).unwrap();
        let b = generate_synthetic(&spec, 9).unwrap();
        assert_eq!(a.source, b.source);
        assert_eq!(a.target, b.target);
        let mut bad = spec.clone();
        bad.n_overlap = 26;
        assert!(generate_synthetic(&bad, 0).is_err());
        let mut bad = spec;
        bad.noise_sd = -1.0;
        assert!(generate_synthetic(&bad, 0).is_err());
    }
}
