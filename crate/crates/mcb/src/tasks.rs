//! Synthetic data with a planted bilinear interaction: a desk-scale
//! classification task (label = argmax over planted bilinear scores) and a
//! proposal-ranking task (pick the proposal the planted scorer prefers).
//! The planted scorer gives every dataset a certified accuracy ceiling.

use crate::error::{Error, Result};
use crate::rng::{child_seed, SplitMix64};
use crate::util::fnv1a_f64;

/// Streams under a task seed: 0 = planted matrices, 1 = probe data for the
/// balance check, 2 = dataset samples.
const STREAM_PLANTED: u64 = 0;
const STREAM_PROBE: u64 = 1;
const STREAM_DATA: u64 = 2;

/// Retries for the label-balance resample rule.
const BALANCE_RETRIES: u64 = 16;
/// No class/index may exceed this frequency on the probe set.
const BALANCE_CAP: f64 = 0.90;
const PROBE_SAMPLES: usize = 512;

#[derive(Debug, Clone)]
pub struct ClassificationSample {
    pub x: Vec<f64>,
    pub q: Vec<f64>,
    pub label: usize,
}

/// Classification task: label of (x, q) is the argmax over classes of
/// x^T M_c q plus optional Gaussian noise. Planted matrices are iid
/// Gaussian, Frobenius-normalized; if any class dominates the probe set the
/// matrices are resampled from the next seed (bounded retries).
#[derive(Debug, Clone)]
pub struct BilinearClassificationTask {
    pub n1: usize,
    pub n2: usize,
    pub classes: usize,
    pub noise_sigma: f64,
    pub seed: u64,
    planted: Vec<Vec<f64>>,
}

impl BilinearClassificationTask {
    pub fn new(n1: usize, n2: usize, classes: usize, noise_sigma: f64, seed: u64) -> Result<Self> {
        if n1 == 0 || n2 == 0 || classes < 2 {
            return Err(Error::InvalidArgument(format!(
                "task needs positive dims and >= 2 classes, got n1={n1}, n2={n2}, C={classes}"
            )));
        }
        for retry in 0..=BALANCE_RETRIES {
            let planted = sample_planted(child_seed(seed + retry, STREAM_PLANTED), classes, n1 * n2);
            let task = BilinearClassificationTask {
                n1,
                n2,
                classes,
                noise_sigma,
                seed,
                planted,
            };
            if task.is_balanced() {
                return Ok(task);
            }
        }
        Err(Error::Config(format!(
            "could not find balanced planted matrices for seed {seed} within {BALANCE_RETRIES} retries"
        )))
    }

    /// The planted matrices, row-major, one per class.
    pub fn planted(&self) -> &[Vec<f64>] {
        &self.planted
    }

    /// x^T M_c q for every class.
    pub fn planted_scores(&self, x: &[f64], q: &[f64]) -> Vec<f64> {
        self.planted
            .iter()
            .map(|m| bilinear_score(m, x, q, self.n2))
            .collect()
    }

    /// Label under the planted scorer with zero noise.
    pub fn planted_label(&self, x: &[f64], q: &[f64]) -> usize {
        crate::nn::argmax(&self.planted_scores(x, q))
    }

    fn is_balanced(&self) -> bool {
        let mut rng = SplitMix64::new(child_seed(self.seed, STREAM_PROBE));
        let mut counts = vec![0usize; self.classes];
        for _ in 0..PROBE_SAMPLES {
            let x = rng.unit_vec(self.n1);
            let q = rng.unit_vec(self.n2);
            counts[self.planted_label(&x, &q)] += 1;
        }
        counts
            .iter()
            .all(|&c| (c as f64) < BALANCE_CAP * PROBE_SAMPLES as f64)
    }

    /// Generates `count` samples. Each sample derives its own child stream
    /// from the sample index, so content is a pure function of
    /// (task config, count) and independent of generation order.
    pub fn generate(&self, count: usize) -> Result<Vec<ClassificationSample>> {
        self.generate_offset(0, count)
    }

    /// Samples with indices `offset .. offset + count`; disjoint offsets
    /// give disjoint splits of the same underlying stream.
    pub fn generate_offset(&self, offset: usize, count: usize) -> Result<Vec<ClassificationSample>> {
        if count == 0 {
            return Err(Error::InvalidArgument("sample count must be >= 1".into()));
        }
        let data_seed = child_seed(self.seed, STREAM_DATA);
        Ok((offset..offset + count)
            .map(|i| {
                let mut rng = SplitMix64::new(child_seed(data_seed, i as u64));
                let x = rng.unit_vec(self.n1);
                let q = rng.unit_vec(self.n2);
                let mut scores = self.planted_scores(&x, &q);
                if self.noise_sigma > 0.0 {
                    for s in &mut scores {
                        *s += self.noise_sigma * rng.next_normal();
                    }
                }
                ClassificationSample {
                    x,
                    q,
                    label: crate::nn::argmax(&scores),
                }
            })
            .collect())
    }

    /// Accuracy of the noise-free planted scorer on a dataset; with noise
    /// this is the task's ceiling proxy.
    pub fn planted_accuracy(&self, data: &[ClassificationSample]) -> f64 {
        let correct = data
            .iter()
            .filter(|s| self.planted_label(&s.x, &s.q) == s.label)
            .count();
        correct as f64 / data.len() as f64
    }
}

#[derive(Debug, Clone)]
pub struct GroundingItem {
    pub phrase: Vec<f64>,
    pub proposals: Vec<Vec<f64>>,
    pub correct: usize,
}

/// Ranking task: among P proposal vectors, the correct one maximizes
/// phrase^T S proposal plus optional noise.
#[derive(Debug, Clone)]
pub struct GroundingRankingTask {
    pub n_v: usize,
    pub n_p: usize,
    pub proposals_per_item: usize,
    pub noise_sigma: f64,
    pub seed: u64,
    scorer: Vec<f64>,
}

impl GroundingRankingTask {
    pub fn new(
        n_v: usize,
        n_p: usize,
        proposals_per_item: usize,
        noise_sigma: f64,
        seed: u64,
    ) -> Result<Self> {
        if proposals_per_item < 2 {
            return Err(Error::InvalidArgument(format!(
                "need at least 2 proposals per item, got {proposals_per_item}"
            )));
        }
        if n_v == 0 || n_p == 0 {
            return Err(Error::InvalidArgument(
                "feature dimensions must be positive".into(),
            ));
        }
        for retry in 0..=BALANCE_RETRIES {
            let scorer = sample_planted(child_seed(seed + retry, STREAM_PLANTED), 1, n_p * n_v)
                .pop()
                .expect("one matrix");
            let task = GroundingRankingTask {
                n_v,
                n_p,
                proposals_per_item,
                noise_sigma,
                seed,
                scorer,
            };
            if task.is_balanced() {
                return Ok(task);
            }
        }
        Err(Error::Config(format!(
            "could not find a balanced grounding scorer for seed {seed} within {BALANCE_RETRIES} retries"
        )))
    }

    /// phrase^T S proposal
    pub fn planted_score(&self, phrase: &[f64], proposal: &[f64]) -> f64 {
        bilinear_score(&self.scorer, phrase, proposal, self.n_v)
    }

    pub fn planted_choice(&self, item: &GroundingItem) -> usize {
        let scores: Vec<f64> = item
            .proposals
            .iter()
            .map(|p| self.planted_score(&item.phrase, p))
            .collect();
        crate::nn::argmax(&scores)
    }

    fn is_balanced(&self) -> bool {
        // Proposals are exchangeable so the correct index is uniform by
        // construction; the probe still guards against degenerate scorers.
        let mut counts = vec![0usize; self.proposals_per_item];
        let probe = self.generate_with_stream(STREAM_PROBE, PROBE_SAMPLES);
        for item in probe {
            counts[item.correct] += 1;
        }
        counts
            .iter()
            .all(|&c| (c as f64) < BALANCE_CAP * PROBE_SAMPLES as f64)
    }

    pub fn generate(&self, count: usize) -> Result<Vec<GroundingItem>> {
        self.generate_offset(0, count)
    }

    /// Items with indices `offset .. offset + count`.
    pub fn generate_offset(&self, offset: usize, count: usize) -> Result<Vec<GroundingItem>> {
        if count == 0 {
            return Err(Error::InvalidArgument("sample count must be >= 1".into()));
        }
        Ok(self.generate_range(STREAM_DATA, offset, count))
    }

    fn generate_with_stream(&self, stream: u64, count: usize) -> Vec<GroundingItem> {
        self.generate_range(stream, 0, count)
    }

    fn generate_range(&self, stream: u64, offset: usize, count: usize) -> Vec<GroundingItem> {
        let data_seed = child_seed(self.seed, stream);
        (offset..offset + count)
            .map(|i| {
                let mut rng = SplitMix64::new(child_seed(data_seed, i as u64));
                let phrase = rng.unit_vec(self.n_p);
                let proposals: Vec<Vec<f64>> = (0..self.proposals_per_item)
                    .map(|_| rng.unit_vec(self.n_v))
                    .collect();
                let scores: Vec<f64> = proposals
                    .iter()
                    .map(|p| {
                        let mut s = self.planted_score(&phrase, p);
                        if self.noise_sigma > 0.0 {
                            s += self.noise_sigma * rng.next_normal();
                        }
                        s
                    })
                    .collect();
                GroundingItem {
                    phrase,
                    proposals,
                    correct: crate::nn::argmax(&scores),
                }
            })
            .collect()
    }

    /// Top-1 accuracy of the noise-free planted scorer.
    pub fn planted_accuracy(&self, data: &[GroundingItem]) -> f64 {
        let correct = data
            .iter()
            .filter(|item| self.planted_choice(item) == item.correct)
            .count();
        correct as f64 / data.len() as f64
    }
}

/// `count` iid Gaussian matrices, each Frobenius-normalized.
fn sample_planted(seed: u64, count: usize, len: usize) -> Vec<Vec<f64>> {
    let mut rng = SplitMix64::new(seed);
    (0..count)
        .map(|_| {
            let mut m = rng.normal_vec(len);
            let norm = crate::util::l2_norm(&m).max(1e-12);
            for x in &mut m {
                *x /= norm;
            }
            m
        })
        .collect()
}

/// x^T M q with M stored row-major (rows indexed by x).
fn bilinear_score(m: &[f64], x: &[f64], q: &[f64], n2: usize) -> f64 {
    let mut acc = 0.0;
    for (i, &xi) in x.iter().enumerate() {
        let row = &m[i * n2..(i + 1) * n2];
        acc += xi * crate::util::dot(row, q);
    }
    acc
}

/// Content hash of a classification dataset (used by determinism checks).
pub fn classification_hash(data: &[ClassificationSample]) -> u64 {
    let mut flat = Vec::new();
    for s in data {
        flat.extend_from_slice(&s.x);
        flat.extend_from_slice(&s.q);
        flat.push(s.label as f64);
    }
    fnv1a_f64(&flat)
}

pub fn grounding_hash(data: &[GroundingItem]) -> u64 {
    let mut flat = Vec::new();
    for item in data {
        flat.extend_from_slice(&item.phrase);
        for p in &item.proposals {
            flat.extend_from_slice(p);
        }
        flat.push(item.correct as f64);
    }
    fnv1a_f64(&flat)
}
