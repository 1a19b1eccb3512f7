//! The trainable classification pipeline:
//! [attention] -> pooling -> [signed sqrt + L2] -> [hidden FC + ReLU]
//! -> unbiased classifier -> softmax cross-entropy.
//!
//! The classifier carries no bias so reported parameter counts coincide
//! with the closed-form counts (`n1*n2*C` for the explicit bilinear
//! baseline, `d*C` for the pooled one).

use crate::attention::{AttentionCache, AttentionGrads, AttentionHead, SpatialGrid};
use crate::error::{Error, Result};
use crate::mcb::McbOperator;
use crate::nn::{
    l2_normalize_backward, l2_normalize_forward, relu_backward, relu_forward,
    signed_sqrt_backward, signed_sqrt_forward, softmax_cross_entropy, LinearLayer, PoolCache,
    Pooling, PoolingMethod,
};
use crate::rng::{child_seed, SplitMix64};
use crate::tasks::ClassificationSample;

/// Explicit bilinear features above this many classifier weights are
/// refused; the infeasibility is the point of the compact variant.
pub const FULL_BILINEAR_CAP: u64 = 10_000_000;

/// Attention settings: the first modality is reshaped into a
/// `grid_h x grid_w` grid of equal slices.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionSpec {
    pub grid_h: usize,
    pub grid_w: usize,
    pub glimpses: usize,
    pub d: usize,
    pub hidden: usize,
}

/// Everything needed to build a model once the task dimensions are known.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub pooling: PoolingMethod,
    /// Pooled dimension for the compact bilinear method.
    pub d: usize,
    /// Width of the hidden FC stage; `ConcatFc` requires it, budget
    /// matching may add it to other methods.
    pub fc_hidden: Option<usize>,
    /// Signed square root + L2 after pooling.
    pub normalization: bool,
    pub attention: Option<AttentionSpec>,
    pub lr: f64,
    pub seed: u64,
}

impl ModelSpec {
    pub fn new(pooling: PoolingMethod, d: usize, seed: u64) -> Self {
        let fc_hidden = match pooling {
            PoolingMethod::ConcatFc => Some(64),
            _ => None,
        };
        ModelSpec {
            pooling,
            d,
            fc_hidden,
            normalization: true,
            attention: None,
            lr: crate::nn::ADAM_DEFAULT_LR,
            seed,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Model {
    pub spec: ModelSpec,
    pub n1: usize,
    pub n2: usize,
    pub classes: usize,
    pub attention: Option<AttentionHead>,
    pub pooling: Pooling,
    pub fc: Option<LinearLayer>,
    pub classifier: LinearLayer,
}

/// Forward intermediates for one sample.
pub struct ModelCache {
    pub x: Vec<f64>,
    pub q: Vec<f64>,
    pub attention: Option<(AttentionCache, Vec<f64>)>,
    pub visual: Vec<f64>,
    pub pool: PoolCache,
    pub pooled: Vec<f64>,
    pub normalized: Vec<f64>,
    pub fc_pre: Option<Vec<f64>>,
    pub fc_act: Option<Vec<f64>>,
    pub features: Vec<f64>,
    pub logits: Vec<f64>,
}

/// Gradients for every learned tensor plus both inputs, in the same order
/// as [`Model::param_tensors`].
pub struct ModelGrads {
    pub tensors: Vec<Vec<f64>>,
    pub grad_x: Vec<f64>,
    pub grad_q: Vec<f64>,
}

impl Model {
    pub fn build(spec: &ModelSpec, n1: usize, n2: usize, classes: usize) -> Result<Model> {
        if n1 == 0 || n2 == 0 || classes == 0 {
            return Err(Error::InvalidArgument(
                "model dimensions must be positive".into(),
            ));
        }
        let attention = match &spec.attention {
            Some(att) => {
                let g = att.grid_h * att.grid_w;
                if g == 0 || !n1.is_multiple_of(g) {
                    return Err(Error::InvalidArgument(format!(
                        "grid {}x{} does not divide the first input dimension {n1}",
                        att.grid_h, att.grid_w
                    )));
                }
                let n_v = n1 / g;
                Some(AttentionHead::new(
                    child_seed(spec.seed, 0),
                    n_v,
                    n2,
                    att.d,
                    att.hidden,
                    att.glimpses,
                )?)
            }
            None => None,
        };
        let visual_dim = match (&attention, &spec.attention) {
            (Some(_), Some(att)) => att.glimpses * (n1 / (att.grid_h * att.grid_w)),
            _ => n1,
        };
        let pooling = match spec.pooling {
            PoolingMethod::EltwiseSum => {
                require_matched(visual_dim, n2, "element-wise sum")?;
                Pooling::EltwiseSum
            }
            PoolingMethod::EltwiseProduct => {
                require_matched(visual_dim, n2, "element-wise product")?;
                Pooling::EltwiseProduct
            }
            PoolingMethod::Concat | PoolingMethod::ConcatFc => Pooling::Concat,
            PoolingMethod::FullBilinear => {
                let weights = (visual_dim as u64)
                    .checked_mul(n2 as u64)
                    .and_then(|p| p.checked_mul(classes as u64))
                    .unwrap_or(u64::MAX);
                if weights > FULL_BILINEAR_CAP {
                    return Err(Error::Config(format!(
                        "full bilinear classifier would need {weights} weights \
                         ({visual_dim} x {n2} x {classes}), above the cap of {FULL_BILINEAR_CAP}"
                    )));
                }
                Pooling::FullBilinear
            }
            PoolingMethod::Mcb => {
                if spec.d == 0 {
                    return Err(Error::InvalidArgument(
                        "compact bilinear pooling needs d >= 1".into(),
                    ));
                }
                Pooling::Mcb(McbOperator::new(
                    child_seed(spec.seed, 1),
                    &[visual_dim, n2],
                    spec.d,
                )?)
            }
        };
        if spec.pooling == PoolingMethod::ConcatFc && spec.fc_hidden.is_none() {
            return Err(Error::InvalidArgument(
                "concat-fc needs a hidden width".into(),
            ));
        }
        let pooled_dim = pooling.output_dim(visual_dim, n2);
        let mut fc_rng = SplitMix64::new(child_seed(spec.seed, 2));
        let fc = spec
            .fc_hidden
            .map(|hidden| LinearLayer::init(pooled_dim, hidden, &mut fc_rng));
        let classifier_in = spec.fc_hidden.unwrap_or(pooled_dim);
        let mut cls_rng = SplitMix64::new(child_seed(spec.seed, 3));
        let classifier = LinearLayer::init_unbiased(classifier_in, classes, &mut cls_rng);
        Ok(Model {
            spec: spec.clone(),
            n1,
            n2,
            classes,
            attention,
            pooling,
            fc,
            classifier,
        })
    }

    /// Total learned parameters, by exact enumeration of tensors.
    pub fn param_count(&self) -> u64 {
        let mut count = self.classifier.param_count();
        if let Some(fc) = &self.fc {
            count += fc.param_count();
        }
        if let Some(att) = &self.attention {
            count += att.param_count();
        }
        count
    }

    pub fn forward(&self, x: &[f64], q: &[f64]) -> Result<ModelCache> {
        if x.len() != self.n1 || q.len() != self.n2 {
            return Err(Error::InvalidArgument(format!(
                "sample dims ({}, {}) do not match model ({}, {})",
                x.len(),
                q.len(),
                self.n1,
                self.n2
            )));
        }
        let (attention, visual) = match (&self.attention, &self.spec.attention) {
            (Some(head), Some(att)) => {
                let grid = SpatialGrid::from_flat(x, att.grid_h, att.grid_w)?;
                let out = head.forward(&grid, q)?;
                (Some((out.cache, out.attended.clone())), out.attended)
            }
            _ => (None, x.to_vec()),
        };
        let (pooled, pool) = self.pooling.forward(&visual, q)?;
        let normalized = if self.spec.normalization {
            l2_normalize_forward(&signed_sqrt_forward(&pooled))
        } else {
            pooled.clone()
        };
        let (fc_pre, fc_act, features) = match &self.fc {
            Some(fc) => {
                let pre = fc.forward(&normalized)?;
                let act = relu_forward(&pre);
                (Some(pre), Some(act.clone()), act)
            }
            None => (None, None, normalized.clone()),
        };
        let logits = self.classifier.forward(&features)?;
        Ok(ModelCache {
            x: x.to_vec(),
            q: q.to_vec(),
            attention,
            visual,
            pool,
            pooled,
            normalized,
            fc_pre,
            fc_act,
            features,
            logits,
        })
    }

    pub fn loss(&self, sample: &ClassificationSample) -> Result<f64> {
        let cache = self.forward(&sample.x, &sample.q)?;
        Ok(softmax_cross_entropy(&cache.logits, sample.label)?.0)
    }

    pub fn predict(&self, x: &[f64], q: &[f64]) -> Result<usize> {
        Ok(crate::nn::argmax(&self.forward(x, q)?.logits))
    }

    /// Attention maps for one sample, `None` for attention-free models.
    pub fn attention_maps(&self, x: &[f64], q: &[f64]) -> Result<Option<Vec<Vec<f64>>>> {
        let cache = self.forward(x, q)?;
        Ok(cache
            .attention
            .as_ref()
            .map(|(att, _)| att.maps().to_vec()))
    }

    /// Full backward pass for one labeled sample; returns the loss and the
    /// gradients for every tensor (same order as [`Self::param_tensors`])
    /// and both inputs.
    pub fn backward(&self, cache: &ModelCache, label: usize) -> Result<(f64, ModelGrads)> {
        let (loss, grad_logits) = softmax_cross_entropy(&cache.logits, label)?;
        let cls = self.classifier.backward(&cache.features, &grad_logits)?;
        let mut grad_normalized;
        let mut fc_weight = Vec::new();
        let mut fc_bias = Vec::new();
        match (&self.fc, &cache.fc_pre) {
            (Some(fc), Some(pre)) => {
                let grad_act = cls.input;
                let grad_pre = relu_backward(pre, &grad_act);
                let fc_grads = fc.backward(&cache.normalized, &grad_pre)?;
                fc_weight = fc_grads.weight;
                fc_bias = fc_grads.bias;
                grad_normalized = fc_grads.input;
            }
            _ => {
                grad_normalized = cls.input;
            }
        }
        if self.spec.normalization {
            let ssq = signed_sqrt_forward(&cache.pooled);
            grad_normalized = l2_normalize_backward(&ssq, &grad_normalized);
            grad_normalized = signed_sqrt_backward(&cache.pooled, &grad_normalized);
        }
        let (grad_visual, mut grad_q) = self.pooling.backward(&cache.pool, &grad_normalized)?;
        let mut tensors = Vec::new();
        let grad_x;
        match (&self.attention, &cache.attention) {
            (Some(head), Some((att_cache, _))) => {
                let att: AttentionGrads = head.backward(att_cache, &grad_visual)?;
                for (a, b) in grad_q.iter_mut().zip(&att.query) {
                    *a += b;
                }
                grad_x = att.grid.concat();
                tensors.push(att.proj1_weight);
                tensors.push(att.proj1_bias);
                tensors.push(att.proj2_weight);
                tensors.push(att.proj2_bias);
            }
            _ => {
                grad_x = grad_visual;
            }
        }
        if self.fc.is_some() {
            tensors.push(fc_weight);
            tensors.push(fc_bias);
        }
        tensors.push(cls.weight);
        Ok((
            loss,
            ModelGrads {
                tensors,
                grad_x,
                grad_q,
            },
        ))
    }

    /// Mutable references to every learned tensor, in the fixed order the
    /// optimizer and gradient tensors use: attention projections, hidden
    /// FC, classifier.
    pub fn param_tensors(&mut self) -> Vec<&mut Vec<f64>> {
        let mut tensors: Vec<&mut Vec<f64>> = Vec::new();
        if let Some(att) = &mut self.attention {
            tensors.push(&mut att.proj1.weight);
            tensors.push(&mut att.proj1.bias);
            tensors.push(&mut att.proj2.weight);
            tensors.push(&mut att.proj2.bias);
        }
        if let Some(fc) = &mut self.fc {
            tensors.push(&mut fc.weight);
            tensors.push(&mut fc.bias);
        }
        tensors.push(&mut self.classifier.weight);
        tensors
    }

    /// Smallest distance to a non-smooth point in the forward pass of this
    /// sample: (min |pooled| entering the signed sqrt, min |pre-ReLU|).
    /// Finite-difference checks need both away from zero.
    pub fn kink_margins(&self, cache: &ModelCache) -> (f64, f64) {
        let mut pool_margin = f64::INFINITY;
        let mut relu_margin = f64::INFINITY;
        if self.spec.normalization {
            for &v in &cache.pooled {
                pool_margin = pool_margin.min(v.abs());
            }
        }
        if let Some(pre) = &cache.fc_pre {
            for &v in pre {
                relu_margin = relu_margin.min(v.abs());
            }
        }
        if let Some((att_cache, _)) = &cache.attention {
            let (p, r) = att_cache.kink_margins();
            pool_margin = pool_margin.min(p);
            relu_margin = relu_margin.min(r);
        }
        (pool_margin, relu_margin)
    }

    /// True when every pooling operator in the model reaches all of its
    /// output buckets; unreachable buckets hold only rounding noise, which
    /// the signed square root amplifies into gradient-check jitter.
    pub fn full_sketch_coverage(&self) -> bool {
        let pooling_ok = match &self.pooling {
            Pooling::Mcb(op) => op.covers_all_outputs(),
            _ => true,
        };
        let attention_ok = self
            .attention
            .as_ref()
            .map(|head| head.mcb.covers_all_outputs())
            .unwrap_or(true);
        pooling_ok && attention_ok
    }
}

fn require_matched(n1: usize, n2: usize, what: &str) -> Result<()> {
    if n1 != n2 {
        return Err(Error::InvalidArgument(format!(
            "{what} needs matching input dims, got {n1} and {n2}"
        )));
    }
    Ok(())
}
