use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Cold,
    Warm,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Cold => "cold",
            Stage::Warm => "warm",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub task: String,
    pub base_model: String,
    pub method: String,
    pub beta: f64,
    pub seed: u64,
    pub stage: Stage,
    pub mae: f64,
    pub rmse: f64,
    pub n_eval: usize,
    /// Test users not evaluated, e.g. absent from the source domain or with
    /// an empty evaluation set.
    pub skipped_users: usize,
    /// Predictions for items that never appeared in target training data.
    pub unseen_item_predictions: usize,
}

/// `(MAE, RMSE)` over `(rating, prediction)` pairs.
pub fn compute_metrics(pairs: &[(f64, f64)]) -> Result<(f64, f64)> {
    if pairs.is_empty() {
        return Err(Error::Empty("evaluation pairs"));
    }
    let n = pairs.len() as f64;
    let (abs, sq) = pairs.iter().fold((0.0, 0.0), |(a, s), (r, p)| {
        let e = r - p;
        (a + e.abs(), s + e * e)
    });
    Ok((abs / n, (sq / n).sqrt()))
}
