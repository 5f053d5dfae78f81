use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::Deserialize;

use super::{DomainDataset, RatingTriple};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    /// Header `user,item,rating,timestamp`.
    Csv,
    /// One Amazon review object per line (`reviewerID`, `asin`, `overall`,
    /// `unixReviewTime`); other keys are ignored.
    JsonLines,
}

impl Format {
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("json") | Some("jsonl") | Some("ndjson") => Format::JsonLines,
            _ => Format::Csv,
        }
    }
}

#[derive(Deserialize)]
struct AmazonReview {
    #[serde(rename = "reviewerID")]
    reviewer_id: String,
    asin: String,
    overall: f64,
    #[serde(rename = "unixReviewTime")]
    unix_review_time: i64,
}

#[derive(Deserialize)]
struct CsvRow {
    user: String,
    item: String,
    rating: f64,
    timestamp: i64,
}

struct Collector {
    dataset: DomainDataset,
    out_of_range: usize,
    first_bad_line: usize,
}

impl Collector {
    fn new() -> Self {
        Self {
            dataset: DomainDataset::default(),
            out_of_range: 0,
            first_bad_line: 0,
        }
    }

    fn add(&mut self, line: usize, user: String, item: String, rating: f64, ts: i64) -> Result<()> {
        if ts < 0 {
            return Err(Error::Parse {
                line,
                message: format!("negative timestamp {ts}"),
            });
        }
        if !(0.0..=5.0).contains(&rating) {
            if self.out_of_range == 0 {
                self.first_bad_line = line;
            }
            self.out_of_range += 1;
            return Ok(());
        }
        self.dataset.push(&RatingTriple {
            user,
            item,
            rating,
            timestamp: ts as u64,
        });
        Ok(())
    }

    fn finish(self, path: &Path) -> Result<DomainDataset> {
        if self.out_of_range > 0 {
            return Err(Error::RatingOutOfRange {
                count: self.out_of_range,
                first_line: self.first_bad_line,
            });
        }
        log::info!(
            "{}: {} ratings, {} users, {} items",
            path.display(),
            self.dataset.len(),
            self.dataset.users.len(),
            self.dataset.items.len()
        );
        Ok(self.dataset)
    }
}

/// Reads one domain's rating log.
///
/// Every row must parse; a malformed row fails the load with its line
/// number. Rows rated outside `[0, 5]` are counted and the load fails
/// reporting that count.
pub fn load_domain(path: &Path, format: Format) -> Result<DomainDataset> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    match format {
        Format::Csv => load_csv(path, file),
        Format::JsonLines => load_jsonl(path, file),
    }
}

fn load_csv(path: &Path, file: File) -> Result<DomainDataset> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(BufReader::new(file));
    let mut out = Collector::new();
    let headers = reader.headers()?.clone();
    if !headers.is_empty() {
        for required in ["user", "item", "rating", "timestamp"] {
            if !headers.iter().any(|h| h == required) {
                return Err(Error::Parse {
                    line: 1,
                    message: format!("missing column `{required}` in header"),
                });
            }
        }
    }
    for (n, rec) in reader.deserialize::<CsvRow>().enumerate() {
        // header is line 1
        let line = n + 2;
        let row = rec.map_err(|e| Error::Parse {
            line,
            message: e.to_string(),
        })?;
        out.add(line, row.user, row.item, row.rating, row.timestamp)?;
    }
    out.finish(path)
}

fn load_jsonl(path: &Path, file: File) -> Result<DomainDataset> {
    let mut out = Collector::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line_no = n + 1;
        let text = line.map_err(|e| Error::io(path, e))?;
        if text.trim().is_empty() {
            continue;
        }
        let r: AmazonReview = serde_json::from_str(&text).map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        out.add(line_no, r.reviewer_id, r.asin, r.overall, r.unix_review_time)?;
    }
    out.finish(path)
}
