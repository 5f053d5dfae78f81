//! Small dense numeric kernel.
//!
//! Everything the recommenders need and nothing more: row-major matrices,
//! two-layer feed-forward nets with hand-written backward passes, softmax,
//! Adam, a central-difference gradient checker and a tensor checkpoint
//! format.

mod adam;
mod checkpoint;
mod dense;
mod gradcheck;
mod net;

pub use adam::Adam;
pub use checkpoint::{Checkpoint, Tensor};
pub use dense::{axpy, dot, softmax, softmax_backward, Dense2D};
pub use gradcheck::grad_check;
pub use net::{Activation, ForwardCache, TwoLayerNet};

/// Trainable parameter groups, exposed as flat slices in a fixed order.
pub trait Parameters {
    fn params(&self) -> Vec<&[f64]>;
    fn params_mut(&mut self) -> Vec<&mut [f64]>;

    fn num_params(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    /// Concatenation of all groups in order.
    fn flatten(&self) -> Vec<f64> {
        self.params().concat()
    }

    /// Inverse of [`Parameters::flatten`].
    fn assign_flat(&mut self, flat: &[f64]) -> crate::Result<()> {
        crate::error::check_len("assign_flat", self.num_params(), flat.len())?;
        let mut offset = 0;
        for group in self.params_mut() {
            let n = group.len();
            group.copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }

    fn is_finite(&self) -> bool {
        self.params().iter().all(|p| p.iter().all(|v| v.is_finite()))
    }
}

/// Fills `values` with draws from `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
pub fn init_uniform(values: &mut [f64], fan_in: usize, rng: &mut crate::rng::Rng) {
    use rand::Rng as _;
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    for v in values {
        *v = rng.random_range(-bound..=bound);
    }
}
