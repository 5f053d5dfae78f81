use serde::{Deserialize, Serialize};

use crate::error::check_len;
use crate::{Error, Result};

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense2D {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl Dense2D {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            values: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        check_len("Dense2D::from_vec", rows * cols, values.len())?;
        if rows == 0 || cols == 0 {
            return Err(Error::invalid("shape", "matrix dimensions must be positive"));
        }
        Ok(Self { rows, cols, values })
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.values[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.values[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.values[r * self.cols..(r + 1) * self.cols]
    }

    /// `self · x`
    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len("matvec", self.cols, x.len())?;
        Ok((0..self.rows).map(|r| dot(self.row(r), x)).collect())
    }

    /// `selfᵀ · x`
    pub fn matvec_t(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len("matvec_t", self.rows, x.len())?;
        let mut out = vec![0.0; self.cols];
        for (r, &xr) in x.iter().enumerate() {
            axpy(xr, self.row(r), &mut out);
        }
        Ok(out)
    }

    pub fn frobenius_distance(&self, other: &Dense2D) -> Result<f64> {
        check_len("frobenius_distance", self.values.len(), other.values.len())?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt())
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `y += alpha · x`
#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Max-shifted softmax.
pub fn softmax(scores: &[f64]) -> Result<Vec<f64>> {
    if scores.is_empty() {
        return Err(Error::Empty("softmax scores"));
    }
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / total).collect())
}

/// Gradient w.r.t. the pre-softmax scores given the softmax output and the
/// gradient w.r.t. that output.
pub fn softmax_backward(weights: &[f64], d_weights: &[f64]) -> Vec<f64> {
    let inner = dot(weights, d_weights);
    weights
        .iter()
        .zip(d_weights)
        .map(|(a, da)| a * (da - inner))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_symmetric_pair() {
        assert_eq!(softmax(&[0.0, 0.0]).unwrap(), vec![0.5, 0.5]);
    }

    #[test]
    fn softmax_large_inputs_stay_finite() {
        let w = softmax(&[1000.0, 1000.5]).unwrap();
        assert!(w.iter().all(|v| v.is_finite() && *v > 0.0));
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn softmax_matches_direct_formula() {
        let e = [1.0f64, 1f64.exp(), 2f64.exp()];
        let z: f64 = e.iter().sum();
        let w = softmax(&[0.0, 1.0, 2.0]).unwrap();
        for (a, b) in w.iter().zip(e.iter()) {
            assert!((a - b / z).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_rejects_empty() {
        assert!(matches!(softmax(&[]), Err(Error::Empty(_))));
    }

    #[test]
    fn matvec_and_transpose() {
        let m = Dense2D::from_vec(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        assert_eq!(m.matvec(&[1.0, 0.0, -1.0]).unwrap(), vec![-2.0, -2.0]);
        assert_eq!(m.matvec_t(&[1.0, 1.0]).unwrap(), vec![5.0, 7.0, 9.0]);
        assert!(m.matvec(&[1.0]).is_err());
    }

    #[test]
    fn softmax_backward_matches_jacobian() {
        let s = [0.3, -1.2, 0.7];
        let a = softmax(&s).unwrap();
        let da = [0.5, -0.25, 2.0];
        let ds = softmax_backward(&a, &da);
        for j in 0..3 {
            let mut expected = 0.0;
            for i in 0..3 {
                let jac = if i == j { a[i] * (1.0 - a[i]) } else { -a[i] * a[j] };
                expected += jac * da[i];
            }
            assert!((ds[j] - expected).abs() < 1e-15);
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn softmax_sums_to_one_and_is_shift_invariant(
                xs in proptest::collection::vec(-50.0f64..50.0, 1..32),
                c in -100.0f64..100.0,
            ) {
                let a = softmax(&xs).unwrap();
                let shifted: Vec<f64> = xs.iter().map(|x| x + c).collect();
                let b = softmax(&shifted).unwrap();
                prop_assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                prop_assert!(a.iter().all(|v| *v > 0.0));
                for (x, y) in a.iter().zip(&b) {
                    prop_assert!((x - y).abs() < 1e-12);
                }
            }
        }
    }
}
