use crate::nn::{init_uniform, Tensor};
use crate::rng::Rng;
use crate::{Error, Result};

/// `count × dim` row-major embedding rows.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    count: usize,
    dim: usize,
    rows: Vec<f64>,
}

impl EmbeddingTable {
    pub fn zeros(count: usize, dim: usize) -> Self {
        Self {
            count,
            dim,
            rows: vec![0.0; count * dim],
        }
    }

    /// Rows drawn from `U(-1/sqrt(dim), 1/sqrt(dim))`.
    pub fn random(count: usize, dim: usize, rng: &mut Rng) -> Self {
        let mut t = Self::zeros(count, dim);
        init_uniform(&mut t.rows, dim, rng);
        t
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map(Vec::len).unwrap_or(0);
        let mut flat = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            crate::error::check_len("EmbeddingTable::from_rows", dim, r.len())?;
            flat.extend_from_slice(r);
        }
        Ok(Self {
            count: rows.len(),
            dim,
            rows: flat,
        })
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i * self.dim..(i + 1) * self.dim]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.rows[i * self.dim..(i + 1) * self.dim]
    }

    pub fn values(&self) -> &[f64] {
        &self.rows
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.rows
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::matrix(self.count, self.dim, &self.rows)
    }

    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        match t.shape.as_slice() {
            [count, dim] => Ok(Self {
                count: *count,
                dim: *dim,
                rows: t.data.clone(),
            }),
            _ => Err(Error::Checkpoint("embedding table must be 2-d".into())),
        }
    }
}
