//! Soft attention over a spatial grid, driven by compact bilinear pooling.
//!
//! Each grid location is pooled with the query vector, normalized (signed
//! square root + L2), and pushed through two shared projection layers that
//! emit one logit per glimpse. A softmax across locations turns the logits
//! of each glimpse into an attention map; the attended output concatenates
//! the per-glimpse weighted sums of the location features. Sketch
//! parameters and projections are shared across locations, matching 1x1
//! convolution semantics.

use crate::error::{Error, Result};
use crate::mcb::{McbForwardRecord, McbOperator};
use crate::nn::{
    l2_normalize_backward, l2_normalize_forward, relu_backward, relu_forward,
    signed_sqrt_backward, signed_sqrt_forward, softmax, LinearLayer,
};
use crate::rng::{child_seed, SplitMix64};
use crate::util::dot;

/// G = height * width feature vectors of equal dimension.
#[derive(Debug, Clone)]
pub struct SpatialGrid {
    pub height: usize,
    pub width: usize,
    pub locations: Vec<Vec<f64>>,
}

impl SpatialGrid {
    pub fn new(height: usize, width: usize, locations: Vec<Vec<f64>>) -> Result<Self> {
        if height == 0 || width == 0 || locations.len() != height * width {
            return Err(Error::InvalidArgument(format!(
                "grid {}x{} does not match {} locations",
                height,
                width,
                locations.len()
            )));
        }
        let dim = locations[0].len();
        if locations.iter().any(|v| v.len() != dim) {
            return Err(Error::InvalidArgument(
                "grid locations must share one dimension".into(),
            ));
        }
        Ok(SpatialGrid {
            height,
            width,
            locations,
        })
    }

    /// Splits a flat vector into `g` equal location chunks.
    pub fn from_flat(flat: &[f64], height: usize, width: usize) -> Result<Self> {
        let g = height * width;
        if g == 0 || !flat.len().is_multiple_of(g) {
            return Err(Error::InvalidArgument(format!(
                "cannot reshape length {} into a {height}x{width} grid",
                flat.len()
            )));
        }
        let n_v = flat.len() / g;
        let locations = (0..g).map(|i| flat[i * n_v..(i + 1) * n_v].to_vec()).collect();
        SpatialGrid::new(height, width, locations)
    }

    pub fn len(&self) -> usize {
        self.locations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.locations.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.locations[0].len()
    }
}

/// Shared per-location pooling plus the two projection layers that score
/// each location per glimpse.
#[derive(Debug, Clone)]
pub struct AttentionHead {
    pub mcb: McbOperator,
    pub proj1: LinearLayer,
    pub proj2: LinearLayer,
    pub glimpses: usize,
}

/// Forward intermediates kept for the backward pass.
#[derive(Debug, Clone)]
pub struct AttentionCache {
    grid: Vec<Vec<f64>>,
    records: Vec<McbForwardRecord>,
    normalized: Vec<Vec<f64>>,
    pre_relu: Vec<Vec<f64>>,
    hidden: Vec<Vec<f64>>,
    maps: Vec<Vec<f64>>,
}

impl AttentionCache {
    /// The per-glimpse attention maps this pass produced.
    pub fn maps(&self) -> &[Vec<f64>] {
        &self.maps
    }

    /// (min |pooled| entering the signed sqrt, min |pre-ReLU|) across all
    /// locations; finite-difference checks need both away from zero.
    pub fn kink_margins(&self) -> (f64, f64) {
        let mut pool_margin = f64::INFINITY;
        let mut relu_margin = f64::INFINITY;
        for rec in &self.records {
            for &v in &rec.output {
                pool_margin = pool_margin.min(v.abs());
            }
        }
        for pre in &self.pre_relu {
            for &v in pre {
                relu_margin = relu_margin.min(v.abs());
            }
        }
        (pool_margin, relu_margin)
    }
}

/// Result of one attention pass: `attended` concatenates the per-glimpse
/// weighted sums; `maps[j]` is the j-th glimpse's distribution over
/// locations.
#[derive(Debug, Clone)]
pub struct AttentionOutput {
    pub attended: Vec<f64>,
    pub maps: Vec<Vec<f64>>,
    pub cache: AttentionCache,
}

#[derive(Debug, Clone)]
pub struct AttentionGrads {
    pub proj1_weight: Vec<f64>,
    pub proj1_bias: Vec<f64>,
    pub proj2_weight: Vec<f64>,
    pub proj2_bias: Vec<f64>,
    pub grid: Vec<Vec<f64>>,
    pub query: Vec<f64>,
}

impl AttentionHead {
    pub fn new(
        seed: u64,
        n_v: usize,
        n_q: usize,
        d: usize,
        hidden: usize,
        glimpses: usize,
    ) -> Result<Self> {
        if glimpses == 0 || hidden == 0 {
            return Err(Error::InvalidArgument(
                "attention needs at least one glimpse and one hidden unit".into(),
            ));
        }
        let mcb = McbOperator::new(child_seed(seed, 0), &[n_v, n_q], d)?;
        let mut rng1 = SplitMix64::new(child_seed(seed, 1));
        let mut rng2 = SplitMix64::new(child_seed(seed, 2));
        Ok(AttentionHead {
            mcb,
            proj1: LinearLayer::init(d, hidden, &mut rng1),
            proj2: LinearLayer::init(hidden, glimpses, &mut rng2),
            glimpses,
        })
    }

    pub fn param_count(&self) -> u64 {
        self.proj1.param_count() + self.proj2.param_count()
    }

    /// Output dimension of `attended` for a grid of feature dim `n_v`.
    pub fn attended_dim(&self, n_v: usize) -> usize {
        self.glimpses * n_v
    }

    pub fn forward(&self, grid: &SpatialGrid, query: &[f64]) -> Result<AttentionOutput> {
        let g_count = grid.len();
        let n_v = grid.feature_dim();
        let mut records = Vec::with_capacity(g_count);
        let mut normalized = Vec::with_capacity(g_count);
        let mut pre_relu = Vec::with_capacity(g_count);
        let mut hidden = Vec::with_capacity(g_count);
        // Per-glimpse logits across locations.
        let mut logits = vec![vec![0.0; g_count]; self.glimpses];
        for (g, loc) in grid.locations.iter().enumerate() {
            let rec = self.mcb.forward(&[loc, query])?;
            let ssq = signed_sqrt_forward(&rec.output);
            let norm = l2_normalize_forward(&ssq);
            let pre = self.proj1.forward(&norm)?;
            let act = relu_forward(&pre);
            let scores = self.proj2.forward(&act)?;
            for (j, &s) in scores.iter().enumerate() {
                logits[j][g] = s;
            }
            records.push(rec);
            normalized.push(norm);
            pre_relu.push(pre);
            hidden.push(act);
        }
        let maps: Vec<Vec<f64>> = logits.iter().map(|l| softmax(l)).collect();
        let mut attended = vec![0.0; self.glimpses * n_v];
        for (j, map) in maps.iter().enumerate() {
            let slot = &mut attended[j * n_v..(j + 1) * n_v];
            for (w, loc) in map.iter().zip(&grid.locations) {
                for (a, &x) in slot.iter_mut().zip(loc) {
                    *a += w * x;
                }
            }
        }
        Ok(AttentionOutput {
            attended,
            maps: maps.clone(),
            cache: AttentionCache {
                grid: grid.locations.clone(),
                records,
                normalized,
                pre_relu,
                hidden,
                maps,
            },
        })
    }

    /// Exact gradients through the weighted sum, the per-glimpse softmax,
    /// both projections, and the per-location pooling. Query gradients sum
    /// over locations.
    pub fn backward(&self, cache: &AttentionCache, g_attended: &[f64]) -> Result<AttentionGrads> {
        let g_count = cache.grid.len();
        let n_v = cache.grid[0].len();
        if g_attended.len() != self.glimpses * n_v {
            return Err(Error::InvalidArgument(format!(
                "attended gradient length {} does not match {} glimpses x {}",
                g_attended.len(),
                self.glimpses,
                n_v
            )));
        }
        let mut grad_grid = vec![vec![0.0; n_v]; g_count];
        // Softmax backward per glimpse: grad_logit = w * (s - <w, s>)
        // where s[g] = <g_attended_j, grid[g]>.
        let mut grad_logits = vec![vec![0.0; g_count]; self.glimpses];
        for j in 0..self.glimpses {
            let g_att = &g_attended[j * n_v..(j + 1) * n_v];
            let map = &cache.maps[j];
            let scores: Vec<f64> = cache.grid.iter().map(|loc| dot(g_att, loc)).collect();
            let expected = dot(map, &scores);
            for g in 0..g_count {
                grad_logits[j][g] = map[g] * (scores[g] - expected);
                for (gg, &x) in grad_grid[g].iter_mut().zip(g_att) {
                    *gg += map[g] * x;
                }
            }
        }
        let mut proj1_weight = vec![0.0; self.proj1.weight.len()];
        let mut proj1_bias = vec![0.0; self.proj1.bias.len()];
        let mut proj2_weight = vec![0.0; self.proj2.weight.len()];
        let mut proj2_bias = vec![0.0; self.proj2.bias.len()];
        let query_dim = self.mcb.input_dims()[1];
        let mut grad_query = vec![0.0; query_dim];
        for g in 0..g_count {
            let grad_scores: Vec<f64> = (0..self.glimpses).map(|j| grad_logits[j][g]).collect();
            let p2 = self.proj2.backward(&cache.hidden[g], &grad_scores)?;
            accumulate(&mut proj2_weight, &p2.weight);
            accumulate(&mut proj2_bias, &p2.bias);
            let grad_pre = relu_backward(&cache.pre_relu[g], &p2.input);
            let p1 = self.proj1.backward(&cache.normalized[g], &grad_pre)?;
            accumulate(&mut proj1_weight, &p1.weight);
            accumulate(&mut proj1_bias, &p1.bias);
            let ssq = signed_sqrt_forward(&cache.records[g].output);
            let grad_ssq = l2_normalize_backward(&ssq, &p1.input);
            let grad_pooled = signed_sqrt_backward(&cache.records[g].output, &grad_ssq);
            let mut grads = self.mcb.backward(&cache.records[g], &grad_pooled)?;
            let gq = grads.pop().expect("two inputs");
            let gloc = grads.pop().expect("two inputs");
            accumulate(&mut grad_query, &gq);
            accumulate(&mut grad_grid[g], &gloc);
        }
        Ok(AttentionGrads {
            proj1_weight,
            proj1_bias,
            proj2_weight,
            proj2_bias,
            grid: grad_grid,
            query: grad_query,
        })
    }
}

fn accumulate(acc: &mut [f64], inc: &[f64]) {
    debug_assert_eq!(acc.len(), inc.len());
    for (a, &b) in acc.iter_mut().zip(inc) {
        *a += b;
    }
}
