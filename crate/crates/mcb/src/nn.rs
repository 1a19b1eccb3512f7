//! Differentiable layers and the optimizer used to train models on top of
//! the pooled features: signed square root, L2 normalization, linear
//! layers, ReLU, the pooling baselines, softmax cross-entropy, and Adam.

use crate::error::{Error, Result};
use crate::mcb::{McbForwardRecord, McbOperator};
use crate::rng::SplitMix64;
use crate::sketch::outer_product_vec;
use crate::util::dot;

/// Derivative regularizer for the signed square root and the L2 guard.
const DELTA: f64 = 1e-12;

/// y[i] = sign(v[i]) * sqrt(|v[i]|)
pub fn signed_sqrt_forward(v: &[f64]) -> Vec<f64> {
    v.iter().map(|&x| x.signum() * x.abs().sqrt()).collect()
}

/// r[i] = g[i] / (2 sqrt(|v[i]| + delta)); the delta keeps the derivative
/// finite at zero instead of clamping it away.
pub fn signed_sqrt_backward(v: &[f64], g: &[f64]) -> Vec<f64> {
    v.iter()
        .zip(g)
        .map(|(&x, &gi)| gi / (2.0 * (x.abs() + DELTA).sqrt()))
        .collect()
}

/// y = v / max(||v||, delta); the zero vector maps to itself.
pub fn l2_normalize_forward(v: &[f64]) -> Vec<f64> {
    let norm = crate::util::l2_norm(v).max(DELTA);
    v.iter().map(|&x| x / norm).collect()
}

/// Jacobian-transpose of v -> v/||v||: r = (g - y <y,g>) / ||v||.
pub fn l2_normalize_backward(v: &[f64], g: &[f64]) -> Vec<f64> {
    let norm = crate::util::l2_norm(v).max(DELTA);
    let y: Vec<f64> = v.iter().map(|&x| x / norm).collect();
    let yg = dot(&y, g);
    y.iter()
        .zip(g)
        .map(|(&yi, &gi)| (gi - yi * yg) / norm)
        .collect()
}

pub fn relu_forward(v: &[f64]) -> Vec<f64> {
    v.iter().map(|&x| x.max(0.0)).collect()
}

pub fn relu_backward(v: &[f64], g: &[f64]) -> Vec<f64> {
    v.iter()
        .zip(g)
        .map(|(&x, &gi)| if x > 0.0 { gi } else { 0.0 })
        .collect()
}

/// Fully connected layer, weights stored row-major (out x in). The bias
/// vector may be empty, in which case the layer is purely linear and
/// contributes no bias parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearLayer {
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl LinearLayer {
    /// Uniform init in +/- sqrt(6 / (in + out)), bias zero.
    pub fn init(in_dim: usize, out_dim: usize, rng: &mut SplitMix64) -> Self {
        let bound = (6.0 / (in_dim + out_dim) as f64).sqrt();
        let weight = (0..in_dim * out_dim)
            .map(|_| rng.next_range(-bound, bound))
            .collect();
        LinearLayer {
            weight,
            bias: vec![0.0; out_dim],
            in_dim,
            out_dim,
        }
    }

    /// Same init without a bias term.
    pub fn init_unbiased(in_dim: usize, out_dim: usize, rng: &mut SplitMix64) -> Self {
        let mut layer = Self::init(in_dim, out_dim, rng);
        layer.bias = Vec::new();
        layer
    }

    pub fn from_parts(
        weight: Vec<f64>,
        bias: Vec<f64>,
        in_dim: usize,
        out_dim: usize,
    ) -> Result<Self> {
        if weight.len() != in_dim * out_dim || (!bias.is_empty() && bias.len() != out_dim) {
            return Err(Error::InvalidArgument("linear layer shape mismatch".into()));
        }
        Ok(LinearLayer {
            weight,
            bias,
            in_dim,
            out_dim,
        })
    }

    pub fn param_count(&self) -> u64 {
        (self.weight.len() + self.bias.len()) as u64
    }

    /// y = W v + b
    pub fn forward(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.in_dim {
            return Err(Error::InvalidArgument(format!(
                "linear layer expects input {}, got {}",
                self.in_dim,
                v.len()
            )));
        }
        let mut y = Vec::with_capacity(self.out_dim);
        for o in 0..self.out_dim {
            let row = &self.weight[o * self.in_dim..(o + 1) * self.in_dim];
            let mut acc = dot(row, v);
            if !self.bias.is_empty() {
                acc += self.bias[o];
            }
            y.push(acc);
        }
        Ok(y)
    }

    /// grad_weight = g (x) v, grad_bias = g, grad_input = W^T g.
    pub fn backward(&self, v: &[f64], g: &[f64]) -> Result<LinearGrads> {
        if v.len() != self.in_dim || g.len() != self.out_dim {
            return Err(Error::InvalidArgument(format!(
                "linear backward shapes ({}, {}) do not match layer ({}, {})",
                v.len(),
                g.len(),
                self.in_dim,
                self.out_dim
            )));
        }
        let mut grad_weight = vec![0.0; self.weight.len()];
        let mut grad_input = vec![0.0; self.in_dim];
        for o in 0..self.out_dim {
            let row = &self.weight[o * self.in_dim..(o + 1) * self.in_dim];
            let go = g[o];
            for i in 0..self.in_dim {
                grad_weight[o * self.in_dim + i] = go * v[i];
                grad_input[i] += row[i] * go;
            }
        }
        let grad_bias = if self.bias.is_empty() {
            Vec::new()
        } else {
            g.to_vec()
        };
        Ok(LinearGrads {
            weight: grad_weight,
            bias: grad_bias,
            input: grad_input,
        })
    }
}

#[derive(Debug, Clone)]
pub struct LinearGrads {
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
    pub input: Vec<f64>,
}

/// Numerically stable softmax (max subtraction).
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&x| (x - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|&e| e / sum).collect()
}

/// Returns (loss, grad_logits) with loss = -log softmax(logits)[label]
/// and grad = softmax(logits) - onehot(label).
pub fn softmax_cross_entropy(logits: &[f64], label: usize) -> Result<(f64, Vec<f64>)> {
    if label >= logits.len() {
        return Err(Error::InvalidArgument(format!(
            "label {label} out of range for {} classes",
            logits.len()
        )));
    }
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let log_sum: f64 = logits.iter().map(|&x| (x - max).exp()).sum::<f64>().ln() + max;
    let loss = log_sum - logits[label];
    let mut grad = softmax(logits);
    grad[label] -= 1.0;
    Ok((loss, grad))
}

/// Index of the maximum entry, lowest index on ties.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Adam state for one parameter tensor.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub stab_eps: f64,
    pub step_count: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

/// Step size reported alongside the momentum constants; the stability
/// epsilon is a separate fixed constant.
pub const ADAM_DEFAULT_LR: f64 = 0.0007;
pub const ADAM_DEFAULT_BETA1: f64 = 0.9;
pub const ADAM_DEFAULT_BETA2: f64 = 0.999;
pub const ADAM_DEFAULT_STAB_EPS: f64 = 1e-8;

impl AdamState {
    pub fn new(lr: f64, len: usize) -> Self {
        AdamState {
            lr,
            beta1: ADAM_DEFAULT_BETA1,
            beta2: ADAM_DEFAULT_BETA2,
            stab_eps: ADAM_DEFAULT_STAB_EPS,
            step_count: 0,
            m: vec![0.0; len],
            v: vec![0.0; len],
        }
    }

    /// One bias-corrected Adam update over a flat parameter tensor.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::InvalidArgument(format!(
                "adam expects {} parameters, got {} params / {} grads",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        self.step_count += 1;
        let t = self.step_count as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + self.stab_eps);
        }
        Ok(())
    }
}

/// Pooling method tag; the stateful stage is [`Pooling`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoolingMethod {
    EltwiseSum,
    EltwiseProduct,
    Concat,
    /// Concatenation followed by a hidden fully connected layer with ReLU.
    ConcatFc,
    FullBilinear,
    Mcb,
}

impl PoolingMethod {
    pub fn label(&self) -> &'static str {
        match self {
            PoolingMethod::EltwiseSum => "eltwise-sum",
            PoolingMethod::EltwiseProduct => "eltwise-product",
            PoolingMethod::Concat => "concat",
            PoolingMethod::ConcatFc => "concat-fc",
            PoolingMethod::FullBilinear => "full-bilinear",
            PoolingMethod::Mcb => "mcb",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "eltwise-sum" | "sum" => Ok(PoolingMethod::EltwiseSum),
            "eltwise-product" | "product" => Ok(PoolingMethod::EltwiseProduct),
            "concat" => Ok(PoolingMethod::Concat),
            "concat-fc" => Ok(PoolingMethod::ConcatFc),
            "full-bilinear" => Ok(PoolingMethod::FullBilinear),
            "mcb" => Ok(PoolingMethod::Mcb),
            other => Err(Error::Usage(format!("unknown pooling method '{other}'"))),
        }
    }

    pub fn all() -> [PoolingMethod; 6] {
        [
            PoolingMethod::EltwiseSum,
            PoolingMethod::EltwiseProduct,
            PoolingMethod::Concat,
            PoolingMethod::ConcatFc,
            PoolingMethod::FullBilinear,
            PoolingMethod::Mcb,
        ]
    }
}

/// The stateless pooling combinators. The `concat-fc` hidden layer lives in
/// the model, not here; its pooled vector is plain concatenation.
#[derive(Debug, Clone)]
pub enum Pooling {
    EltwiseSum,
    EltwiseProduct,
    Concat,
    FullBilinear,
    Mcb(McbOperator),
}

/// Cache for the pooling backward pass.
#[derive(Debug, Clone)]
pub enum PoolCache {
    Simple { x: Vec<f64>, q: Vec<f64> },
    Mcb(McbForwardRecord),
}

impl Pooling {
    pub fn output_dim(&self, n1: usize, n2: usize) -> usize {
        match self {
            Pooling::EltwiseSum | Pooling::EltwiseProduct => n1,
            Pooling::Concat => n1 + n2,
            Pooling::FullBilinear => n1 * n2,
            Pooling::Mcb(op) => op.output_dim(),
        }
    }

    pub fn forward(&self, x: &[f64], q: &[f64]) -> Result<(Vec<f64>, PoolCache)> {
        let out = match self {
            Pooling::EltwiseSum => {
                require_equal_len(x, q)?;
                x.iter().zip(q).map(|(a, b)| a + b).collect()
            }
            Pooling::EltwiseProduct => {
                require_equal_len(x, q)?;
                x.iter().zip(q).map(|(a, b)| a * b).collect()
            }
            Pooling::Concat => {
                let mut v = x.to_vec();
                v.extend_from_slice(q);
                v
            }
            Pooling::FullBilinear => outer_product_vec(x, q),
            Pooling::Mcb(op) => {
                let rec = op.forward(&[x, q])?;
                let out = rec.output.clone();
                return Ok((out, PoolCache::Mcb(rec)));
            }
        };
        Ok((
            out,
            PoolCache::Simple {
                x: x.to_vec(),
                q: q.to_vec(),
            },
        ))
    }

    /// Gradients with respect to both inputs.
    pub fn backward(&self, cache: &PoolCache, g: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        match (self, cache) {
            (Pooling::EltwiseSum, PoolCache::Simple { .. }) => Ok((g.to_vec(), g.to_vec())),
            (Pooling::EltwiseProduct, PoolCache::Simple { x, q }) => {
                let gx = g.iter().zip(q).map(|(gi, qi)| gi * qi).collect();
                let gq = g.iter().zip(x).map(|(gi, xi)| gi * xi).collect();
                Ok((gx, gq))
            }
            (Pooling::Concat, PoolCache::Simple { x, q }) => Ok((
                g[..x.len()].to_vec(),
                g[x.len()..x.len() + q.len()].to_vec(),
            )),
            (Pooling::FullBilinear, PoolCache::Simple { x, q }) => {
                let (n1, n2) = (x.len(), q.len());
                let mut gx = vec![0.0; n1];
                let mut gq = vec![0.0; n2];
                for i in 0..n1 {
                    for j in 0..n2 {
                        let gij = g[i * n2 + j];
                        gx[i] += gij * q[j];
                        gq[j] += gij * x[i];
                    }
                }
                Ok((gx, gq))
            }
            (Pooling::Mcb(op), PoolCache::Mcb(rec)) => {
                let mut grads = op.backward(rec, g)?;
                let gq = grads.pop().expect("two inputs");
                let gx = grads.pop().expect("two inputs");
                Ok((gx, gq))
            }
            _ => Err(Error::InvalidArgument(
                "pooling cache does not match pooling kind".into(),
            )),
        }
    }
}

fn require_equal_len(x: &[f64], q: &[f64]) -> Result<()> {
    if x.len() != q.len() {
        return Err(Error::InvalidArgument(format!(
            "element-wise pooling needs equal lengths, got {} and {}",
            x.len(),
            q.len()
        )));
    }
    Ok(())
}
