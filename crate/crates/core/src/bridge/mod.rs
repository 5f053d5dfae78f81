//! Personalized preference bridges.
//!
//! For a user with time-ordered source items `v_1..v_n`:
//!
//! ```text
//! s_j = h(v_j; θ)                  attention net, k → k → 1
//! a   = softmax(s)
//! p   = Σ_j a_j v_j                characteristic embedding
//! w   = g(p; φ)                    meta net, k → 2k → k²
//! W   = reshape_row_major(w, k, k)
//! û   = W · u_src                  transformed user representation
//! ```
//!
//! `(θ, φ)` are trained either on target ratings of overlapping users
//! ([`task_oriented_loss`]) or by regressing onto their target
//! representations ([`mapping_oriented_loss`]). The common bridge baseline
//! is a single `W` shared by all users, trained by regression.

mod loss;
mod train;

use serde::{Deserialize, Serialize};

pub use loss::{
    common_mapping_loss, mapping_oriented_loss, task_oriented_loss, MappingTarget, TaskSample,
};
pub use train::{train_common_bridge, train_meta, train_meta_mapping, BridgeTrainReport};

use crate::error::check_len;
use crate::nn::{
    axpy, softmax, softmax_backward, Activation, Checkpoint, Dense2D, ForwardCache, Parameters,
    Tensor, TwoLayerNet,
};
use crate::rng::Rng;
use crate::{Error, Result};

/// Longest source history fed to the encoder unless configured otherwise.
pub const DEFAULT_MAX_SEQ_LEN: usize = 20;

/// Attention pooling of source item embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct CharacteristicEncoder {
    pub attention: TwoLayerNet,
    /// Only the most recent `max_seq_len` items are pooled; `None` pools all.
    pub max_seq_len: Option<usize>,
}

impl CharacteristicEncoder {
    pub fn new(dim: usize, activation: Activation, max_seq_len: Option<usize>, rng: &mut Rng) -> Self {
        Self {
            attention: TwoLayerNet::random(dim, dim, 1, activation, rng),
            max_seq_len,
        }
    }

    pub fn dim(&self) -> usize {
        self.attention.input_dim()
    }

    /// The most recent tail of a time-ordered history that gets pooled.
    pub fn window<'a, T>(&self, items: &'a [T]) -> &'a [T] {
        match self.max_seq_len {
            Some(cap) if items.len() > cap => &items[items.len() - cap..],
            _ => items,
        }
    }
}

/// Produces the flattened `k×k` bridge from a characteristic embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct MetaNetwork {
    pub net: TwoLayerNet,
}

impl MetaNetwork {
    pub fn new(dim: usize, activation: Activation, rng: &mut Rng) -> Self {
        Self {
            net: TwoLayerNet::random(dim, 2 * dim, dim * dim, activation, rng),
        }
    }

    pub fn dim(&self) -> usize {
        self.net.input_dim()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PersonalizedBridge {
    pub matrix: Dense2D,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommonBridge {
    pub matrix: Dense2D,
}

impl CommonBridge {
    pub fn apply(&self, u_src: &[f64]) -> Result<Vec<f64>> {
        apply_bridge(&self.matrix, u_src)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::new();
        let m = &self.matrix;
        ck.insert("bridge", Tensor::matrix(m.rows(), m.cols(), m.values()));
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let t = ck.get("bridge")?;
        match t.shape.as_slice() {
            [r, c] if r == c => Ok(Self {
                matrix: Dense2D::from_vec(*r, *c, t.data.clone())?,
            }),
            _ => Err(Error::Checkpoint("bridge must be a square matrix".into())),
        }
    }
}

/// A user's inputs to the bridge: source representation and source item
/// embeddings in time order.
#[derive(Debug, Clone, PartialEq)]
pub struct UserContext {
    pub src_rep: Vec<f64>,
    pub history: Vec<Vec<f64>>,
}

/// Attention weights over `encoder.window(items)`.
pub fn attention_scores(enc: &CharacteristicEncoder, items: &[Vec<f64>]) -> Result<Vec<f64>> {
    let items = enc.window(items);
    if items.is_empty() {
        return Err(Error::ColdInSource);
    }
    let scores = items
        .iter()
        .map(|v| Ok(enc.attention.forward(v)?[0]))
        .collect::<Result<Vec<f64>>>()?;
    softmax(&scores)
}

/// `p = Σ a_j v_j` over the encoder window.
pub fn encode_characteristic(enc: &CharacteristicEncoder, items: &[Vec<f64>]) -> Result<Vec<f64>> {
    let weights = attention_scores(enc, items)?;
    let mut p = vec![0.0; enc.dim()];
    for (a, v) in weights.iter().zip(enc.window(items)) {
        check_len("item embedding", enc.dim(), v.len())?;
        axpy(*a, v, &mut p);
    }
    Ok(p)
}

/// Reshapes `g(p; φ)` row-major into a `k×k` matrix.
pub fn generate_bridge(meta: &MetaNetwork, p: &[f64]) -> Result<PersonalizedBridge> {
    let k = meta.dim();
    let w = meta.net.forward(p)?;
    check_len("meta output", k * k, w.len())?;
    Ok(PersonalizedBridge {
        matrix: Dense2D::from_vec(k, k, w)?,
    })
}

/// `û = W · u`
pub fn apply_bridge(bridge: &Dense2D, u_src: &[f64]) -> Result<Vec<f64>> {
    if bridge.rows() != bridge.cols() {
        return Err(Error::Shape {
            context: "bridge must be square",
            expected: bridge.rows(),
            actual: bridge.cols(),
        });
    }
    bridge.matvec(u_src)
}

/// Trainable `(θ, φ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MetaBridge {
    pub encoder: CharacteristicEncoder,
    pub meta: MetaNetwork,
}

/// Intermediate values of one user's forward pass.
pub(crate) struct UserForward {
    window_len: usize,
    attention: Vec<ForwardCache>,
    weights: Vec<f64>,
    characteristic: Vec<f64>,
    meta: ForwardCache,
    pub(crate) transformed: Vec<f64>,
}

impl MetaBridge {
    pub fn new(
        dim: usize,
        activation: Activation,
        max_seq_len: Option<usize>,
        rng: &mut Rng,
    ) -> Self {
        Self {
            encoder: CharacteristicEncoder::new(dim, activation, max_seq_len, rng),
            meta: MetaNetwork::new(dim, activation, rng),
        }
    }

    pub fn dim(&self) -> usize {
        self.meta.dim()
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            encoder: CharacteristicEncoder {
                attention: self.encoder.attention.zeros_like(),
                max_seq_len: self.encoder.max_seq_len,
            },
            meta: MetaNetwork {
                net: self.meta.net.zeros_like(),
            },
        }
    }

    pub fn bridge_for(&self, history: &[Vec<f64>]) -> Result<PersonalizedBridge> {
        let p = encode_characteristic(&self.encoder, history)?;
        generate_bridge(&self.meta, &p)
    }

    /// `f_u(u_src; g(p_u))`
    pub fn transform(&self, ctx: &UserContext) -> Result<Vec<f64>> {
        let bridge = self.bridge_for(&ctx.history)?;
        apply_bridge(&bridge.matrix, &ctx.src_rep)
    }

    pub(crate) fn forward_user(&self, ctx: &UserContext) -> Result<UserForward> {
        let k = self.dim();
        check_len("source representation", k, ctx.src_rep.len())?;
        let window = self.encoder.window(&ctx.history);
        if window.is_empty() {
            return Err(Error::ColdInSource);
        }
        let attention = window
            .iter()
            .map(|v| self.encoder.attention.forward_cached(v))
            .collect::<Result<Vec<_>>>()?;
        let scores: Vec<f64> = attention.iter().map(|c| c.output[0]).collect();
        let weights = softmax(&scores)?;
        let mut characteristic = vec![0.0; k];
        for (a, v) in weights.iter().zip(window) {
            axpy(*a, v, &mut characteristic);
        }
        let meta = self.meta.net.forward_cached(&characteristic)?;
        let matrix = Dense2D::from_vec(k, k, meta.output.clone())?;
        let transformed = matrix.matvec(&ctx.src_rep)?;
        Ok(UserForward {
            window_len: window.len(),
            attention,
            weights,
            characteristic,
            meta,
            transformed,
        })
    }

    /// Backpropagates `d_loss/dû` through bridge, meta net, pooling,
    /// softmax and attention net, accumulating into `grads`.
    pub(crate) fn backward_user(
        &self,
        ctx: &UserContext,
        fwd: &UserForward,
        d_transformed: &[f64],
        grads: &mut MetaBridge,
    ) -> Result<()> {
        let k = self.dim();
        check_len("d_transformed", k, d_transformed.len())?;
        // û_i = Σ_j W_ij u_j  =>  dW_ij = dû_i · u_j
        let mut d_w = vec![0.0; k * k];
        for i in 0..k {
            axpy(d_transformed[i], &ctx.src_rep, &mut d_w[i * k..(i + 1) * k]);
        }
        let d_p = self
            .meta
            .net
            .backward(&fwd.characteristic, &fwd.meta, &d_w, &mut grads.meta.net)?;

        let window = &ctx.history[ctx.history.len() - fwd.window_len..];
        let d_weights: Vec<f64> = window.iter().map(|v| crate::nn::dot(&d_p, v)).collect();
        let d_scores = softmax_backward(&fwd.weights, &d_weights);
        for ((v, cache), ds) in window.iter().zip(&fwd.attention).zip(d_scores) {
            self.encoder
                .attention
                .backward(v, cache, &[ds], &mut grads.encoder.attention)?;
        }
        Ok(())
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::new();
        ck.merge_prefixed("encoder.attention", self.encoder.attention.to_checkpoint());
        ck.merge_prefixed("meta", self.meta.net.to_checkpoint());
        let cap = self.encoder.max_seq_len.unwrap_or(0) as f64;
        ck.insert("encoder.max_seq_len", Tensor::vector(&[cap]));
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let attention = TwoLayerNet::from_checkpoint(&ck.sub("encoder.attention"))?;
        let meta = TwoLayerNet::from_checkpoint(&ck.sub("meta"))?;
        let k = meta.input_dim();
        check_len("meta output", k * k, meta.output_dim())?;
        check_len("attention input", k, attention.input_dim())?;
        check_len("attention output", 1, attention.output_dim())?;
        let cap = ck.get("encoder.max_seq_len")?.data.first().copied().unwrap_or(0.0);
        Ok(Self {
            encoder: CharacteristicEncoder {
                attention,
                max_seq_len: (cap > 0.0).then_some(cap as usize),
            },
            meta: MetaNetwork { net: meta },
        })
    }
}

impl Parameters for MetaBridge {
    fn params(&self) -> Vec<&[f64]> {
        let mut p = self.encoder.attention.params();
        p.extend(self.meta.net.params());
        p
    }

    fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut p = self.encoder.attention.params_mut();
        p.extend(self.meta.net.params_mut());
        p
    }
}
