//! Proposal-ranking head: a linear embedding of each proposal, L2
//! normalization of both modalities, pooling, an optional signed-sqrt +
//! L2 stage, and a linear layer scoring each proposal; a softmax across
//! the proposals of one item turns scores into a ranking trained with
//! cross-entropy against the correct index.

use crate::error::{Error, Result};
use crate::mcb::McbOperator;
use crate::nn::{
    l2_normalize_backward, l2_normalize_forward, signed_sqrt_backward, signed_sqrt_forward,
    softmax_cross_entropy, AdamState, LinearLayer, Pooling, PoolingMethod,
};
use crate::rng::{child_seed, SplitMix64};
use crate::tasks::GroundingItem;

#[derive(Debug, Clone)]
pub struct GroundingSpec {
    pub pooling: PoolingMethod,
    pub d: usize,
    pub embed_dim: usize,
    pub normalization: bool,
    pub lr: f64,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct GroundingModel {
    pub spec: GroundingSpec,
    pub n_v: usize,
    pub n_p: usize,
    pub embed: LinearLayer,
    pub pooling: Pooling,
    pub scorer: LinearLayer,
}

impl GroundingModel {
    pub fn build(spec: &GroundingSpec, n_v: usize, n_p: usize) -> Result<GroundingModel> {
        if n_v == 0 || n_p == 0 {
            return Err(Error::InvalidArgument(
                "grounding dimensions must be positive".into(),
            ));
        }
        let e = spec.embed_dim;
        let pooling = match spec.pooling {
            PoolingMethod::EltwiseSum => {
                require_eq(e, n_p, "element-wise sum")?;
                Pooling::EltwiseSum
            }
            PoolingMethod::EltwiseProduct => {
                require_eq(e, n_p, "element-wise product")?;
                Pooling::EltwiseProduct
            }
            PoolingMethod::Concat | PoolingMethod::ConcatFc => Pooling::Concat,
            PoolingMethod::FullBilinear => Pooling::FullBilinear,
            PoolingMethod::Mcb => Pooling::Mcb(McbOperator::new(
                child_seed(spec.seed, 0),
                &[e, n_p],
                spec.d,
            )?),
        };
        let mut embed_rng = SplitMix64::new(child_seed(spec.seed, 1));
        let embed = LinearLayer::init(n_v, e, &mut embed_rng);
        let pooled_dim = pooling.output_dim(e, n_p);
        let mut scorer_rng = SplitMix64::new(child_seed(spec.seed, 2));
        let scorer = LinearLayer::init_unbiased(pooled_dim, 1, &mut scorer_rng);
        Ok(GroundingModel {
            spec: spec.clone(),
            n_v,
            n_p,
            embed,
            pooling,
            scorer,
        })
    }

    pub fn param_count(&self) -> u64 {
        self.embed.param_count() + self.scorer.param_count()
    }

    /// One score per proposal.
    pub fn scores(&self, item: &GroundingItem) -> Result<Vec<f64>> {
        item.proposals
            .iter()
            .map(|p| Ok(self.forward_one(&item.phrase, p)?.score))
            .collect()
    }

    pub fn predict(&self, item: &GroundingItem) -> Result<usize> {
        Ok(crate::nn::argmax(&self.scores(item)?))
    }

    pub fn loss(&self, item: &GroundingItem) -> Result<f64> {
        Ok(softmax_cross_entropy(&self.scores(item)?, item.correct)?.0)
    }

    fn forward_one(&self, phrase: &[f64], proposal: &[f64]) -> Result<ProposalPass> {
        let embedded = self.embed.forward(proposal)?;
        let embedded_n = l2_normalize_forward(&embedded);
        let phrase_n = l2_normalize_forward(phrase);
        let (pooled, pool_cache) = self.pooling.forward(&embedded_n, &phrase_n)?;
        let features = if self.spec.normalization {
            l2_normalize_forward(&signed_sqrt_forward(&pooled))
        } else {
            pooled.clone()
        };
        let score = self.scorer.forward(&features)?[0];
        Ok(ProposalPass {
            embedded,
            pooled,
            pool_cache,
            features,
            score,
        })
    }

    /// Loss plus gradients for the embedding and scorer tensors.
    pub fn backward(&self, item: &GroundingItem) -> Result<(f64, GroundingGrads)> {
        let passes: Vec<ProposalPass> = item
            .proposals
            .iter()
            .map(|p| self.forward_one(&item.phrase, p))
            .collect::<Result<Vec<_>>>()?;
        let logits: Vec<f64> = passes.iter().map(|p| p.score).collect();
        let (loss, grad_logits) = softmax_cross_entropy(&logits, item.correct)?;
        let mut grads = GroundingGrads {
            embed_weight: vec![0.0; self.embed.weight.len()],
            embed_bias: vec![0.0; self.embed.bias.len()],
            scorer_weight: vec![0.0; self.scorer.weight.len()],
        };
        for (idx, (pass, &g_score)) in passes.iter().zip(&grad_logits).enumerate() {
            let s = self.scorer.backward(&pass.features, &[g_score])?;
            add(&mut grads.scorer_weight, &s.weight);
            let mut grad_pooled = s.input;
            if self.spec.normalization {
                let ssq = signed_sqrt_forward(&pass.pooled);
                grad_pooled = l2_normalize_backward(&ssq, &grad_pooled);
                grad_pooled = signed_sqrt_backward(&pass.pooled, &grad_pooled);
            }
            let (grad_embedded_n, _grad_phrase_n) =
                self.pooling.backward(&pass.pool_cache, &grad_pooled)?;
            let grad_embedded = l2_normalize_backward(&pass.embedded, &grad_embedded_n);
            let e = self.embed.backward(&item.proposals[idx], &grad_embedded)?;
            add(&mut grads.embed_weight, &e.weight);
            add(&mut grads.embed_bias, &e.bias);
        }
        Ok((loss, grads))
    }

    pub fn param_tensors(&mut self) -> Vec<&mut Vec<f64>> {
        vec![
            &mut self.embed.weight,
            &mut self.embed.bias,
            &mut self.scorer.weight,
        ]
    }
}

struct ProposalPass {
    embedded: Vec<f64>,
    pooled: Vec<f64>,
    pool_cache: crate::nn::PoolCache,
    features: Vec<f64>,
    score: f64,
}

#[derive(Debug, Clone)]
pub struct GroundingGrads {
    pub embed_weight: Vec<f64>,
    pub embed_bias: Vec<f64>,
    pub scorer_weight: Vec<f64>,
}

impl GroundingGrads {
    fn tensors(&self) -> [&Vec<f64>; 3] {
        [&self.embed_weight, &self.embed_bias, &self.scorer_weight]
    }
}

fn add(acc: &mut [f64], inc: &[f64]) {
    for (a, b) in acc.iter_mut().zip(inc) {
        *a += b;
    }
}

fn require_eq(a: usize, b: usize, what: &str) -> Result<()> {
    if a != b {
        return Err(Error::InvalidArgument(format!(
            "{what} needs matching dims, got {a} and {b}"
        )));
    }
    Ok(())
}

/// Adam training of the grounding head with epoch-level early stopping on
/// validation top-1; returns the best snapshot.
pub fn train_grounding(
    spec: &GroundingSpec,
    train_set: &[GroundingItem],
    val_set: &[GroundingItem],
    epochs: usize,
    batch_size: usize,
    patience: usize,
) -> Result<(GroundingModel, Vec<(usize, f64)>)> {
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::InvalidArgument("datasets must be non-empty".into()));
    }
    let n_v = train_set[0].proposals[0].len();
    let n_p = train_set[0].phrase.len();
    let mut model = GroundingModel::build(spec, n_v, n_p)?;
    let mut states: Vec<AdamState> = model
        .param_tensors()
        .iter()
        .map(|t| AdamState::new(spec.lr, t.len()))
        .collect();
    let mut best = model.clone();
    let mut best_val = evaluate_grounding(&model, val_set)?;
    let mut history = vec![(0usize, best_val)];
    let mut since_best = 0usize;
    let shuffle_seed = child_seed(spec.seed, 17);
    let mut indices: Vec<usize> = (0..train_set.len()).collect();
    for epoch in 1..=epochs {
        let mut rng = SplitMix64::new(child_seed(shuffle_seed, epoch as u64));
        rng.shuffle(&mut indices);
        for batch in indices.chunks(batch_size.max(1)) {
            let mut acc: Option<GroundingGrads> = None;
            for &i in batch {
                let (loss, grads) = model.backward(&train_set[i])?;
                if !loss.is_finite() {
                    return Err(Error::TrainingDiverged { epoch });
                }
                match &mut acc {
                    None => acc = Some(grads),
                    Some(acc) => {
                        add(&mut acc.embed_weight, &grads.embed_weight);
                        add(&mut acc.embed_bias, &grads.embed_bias);
                        add(&mut acc.scorer_weight, &grads.scorer_weight);
                    }
                }
            }
            let mut acc = acc.expect("non-empty batch");
            let scale = 1.0 / batch.len() as f64;
            for tensor in [
                &mut acc.embed_weight,
                &mut acc.embed_bias,
                &mut acc.scorer_weight,
            ] {
                for g in tensor.iter_mut() {
                    *g *= scale;
                }
            }
            let grad_tensors = acc.tensors().map(|t| t.clone());
            for ((tensor, grads), state) in model
                .param_tensors()
                .into_iter()
                .zip(grad_tensors.iter())
                .zip(&mut states)
            {
                state.step(tensor, grads)?;
            }
        }
        let val_acc = evaluate_grounding(&model, val_set)?;
        history.push((epoch, val_acc));
        if val_acc > best_val {
            best_val = val_acc;
            best = model.clone();
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= patience {
                break;
            }
        }
    }
    Ok((best, history))
}

/// Top-1 accuracy over items.
pub fn evaluate_grounding(model: &GroundingModel, data: &[GroundingItem]) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::InvalidArgument(
            "cannot evaluate on an empty dataset".into(),
        ));
    }
    let mut correct = 0usize;
    for item in data {
        if model.predict(item)? == item.correct {
            correct += 1;
        }
    }
    Ok(correct as f64 / data.len() as f64)
}
