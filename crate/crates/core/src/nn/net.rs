use serde::{Deserialize, Serialize};

use super::{axpy, init_uniform, Checkpoint, Dense2D, Parameters, Tensor};
use crate::error::check_len;
use crate::rng::Rng;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Relu,
    Tanh,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `a`.
    #[inline]
    fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - a * a,
        }
    }
}

/// `out = W2ᵀ · act(W1ᵀ · x + b1) + b2`, with `W1: in×hidden`, `W2: hidden×out`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoLayerNet {
    pub w1: Dense2D,
    pub b1: Vec<f64>,
    pub w2: Dense2D,
    pub b2: Vec<f64>,
    pub activation: Activation,
}

/// Intermediate values of one forward pass, needed for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub pre: Vec<f64>,
    pub hidden: Vec<f64>,
    pub output: Vec<f64>,
}

impl TwoLayerNet {
    pub fn zeros(input: usize, hidden: usize, output: usize, activation: Activation) -> Self {
        Self {
            w1: Dense2D::zeros(input, hidden),
            b1: vec![0.0; hidden],
            w2: Dense2D::zeros(hidden, output),
            b2: vec![0.0; output],
            activation,
        }
    }

    pub fn random(
        input: usize,
        hidden: usize,
        output: usize,
        activation: Activation,
        rng: &mut Rng,
    ) -> Self {
        let mut net = Self::zeros(input, hidden, output, activation);
        init_uniform(net.w1.values_mut(), input, rng);
        init_uniform(&mut net.b1, input, rng);
        init_uniform(net.w2.values_mut(), hidden, rng);
        init_uniform(&mut net.b2, hidden, rng);
        net
    }

    /// Same shapes, all zeros. Used as a gradient accumulator.
    pub fn zeros_like(&self) -> Self {
        Self::zeros(
            self.input_dim(),
            self.hidden_dim(),
            self.output_dim(),
            self.activation,
        )
    }

    pub fn input_dim(&self) -> usize {
        self.w1.rows()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w1.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.w2.cols()
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward_cached(x)?.output)
    }

    pub fn forward_cached(&self, x: &[f64]) -> Result<ForwardCache> {
        check_len("TwoLayerNet input", self.input_dim(), x.len())?;
        let mut pre = self.w1.matvec_t(x)?;
        for (z, b) in pre.iter_mut().zip(&self.b1) {
            *z += b;
        }
        let hidden: Vec<f64> = pre.iter().map(|&z| self.activation.apply(z)).collect();
        let mut output = self.w2.matvec_t(&hidden)?;
        for (o, b) in output.iter_mut().zip(&self.b2) {
            *o += b;
        }
        Ok(ForwardCache {
            pre,
            hidden,
            output,
        })
    }

    /// Accumulates parameter gradients into `grads` and returns `d_loss/d_x`.
    pub fn backward(
        &self,
        x: &[f64],
        cache: &ForwardCache,
        d_out: &[f64],
        grads: &mut TwoLayerNet,
    ) -> Result<Vec<f64>> {
        check_len("TwoLayerNet d_out", self.output_dim(), d_out.len())?;
        let (hidden_dim, out_dim) = (self.hidden_dim(), self.output_dim());

        axpy(1.0, d_out, &mut grads.b2);
        let gw2 = grads.w2.values_mut();
        for h in 0..hidden_dim {
            axpy(
                cache.hidden[h],
                d_out,
                &mut gw2[h * out_dim..(h + 1) * out_dim],
            );
        }

        let d_hidden = self.w2.matvec(d_out)?;
        let d_pre: Vec<f64> = d_hidden
            .iter()
            .zip(cache.pre.iter().zip(&cache.hidden))
            .map(|(dh, (&z, &a))| dh * self.activation.derivative(z, a))
            .collect();

        axpy(1.0, &d_pre, &mut grads.b1);
        let gw1 = grads.w1.values_mut();
        for (i, &xi) in x.iter().enumerate() {
            axpy(xi, &d_pre, &mut gw1[i * hidden_dim..(i + 1) * hidden_dim]);
        }

        self.w1.matvec(&d_pre)
    }
}

impl TwoLayerNet {
    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::new();
        ck.insert("w1", Tensor::matrix(self.w1.rows(), self.w1.cols(), self.w1.values()));
        ck.insert("b1", Tensor::vector(&self.b1));
        ck.insert("w2", Tensor::matrix(self.w2.rows(), self.w2.cols(), self.w2.values()));
        ck.insert("b2", Tensor::vector(&self.b2));
        let act = match self.activation {
            Activation::Relu => 0.0,
            Activation::Tanh => 1.0,
        };
        ck.insert("activation", Tensor::vector(&[act]));
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let matrix = |name: &str| -> Result<Dense2D> {
            let t = ck.get(name)?;
            match t.shape.as_slice() {
                [r, c] => Dense2D::from_vec(*r, *c, t.data.clone()),
                _ => Err(Error::Checkpoint(format!("`{name}` is not a matrix"))),
            }
        };
        let w1 = matrix("w1")?;
        let w2 = matrix("w2")?;
        let b1 = ck.get("b1")?.data.clone();
        let b2 = ck.get("b2")?.data.clone();
        check_len("checkpoint b1", w1.cols(), b1.len())?;
        check_len("checkpoint w2 rows", w1.cols(), w2.rows())?;
        check_len("checkpoint b2", w2.cols(), b2.len())?;
        let activation = match ck.get("activation")?.data.first() {
            Some(v) if *v == 0.0 => Activation::Relu,
            Some(v) if *v == 1.0 => Activation::Tanh,
            _ => return Err(Error::Checkpoint("unknown activation code".into())),
        };
        Ok(Self {
            w1,
            b1,
            w2,
            b2,
            activation,
        })
    }
}

impl Parameters for TwoLayerNet {
    fn params(&self) -> Vec<&[f64]> {
        vec![self.w1.values(), &self.b1, self.w2.values(), &self.b2]
    }

    fn params_mut(&mut self) -> Vec<&mut [f64]> {
        vec![
            self.w1.values_mut(),
            &mut self.b1,
            self.w2.values_mut(),
            &mut self.b2,
        ]
    }
}
