//! Training loop, evaluation, gradient checker, and the ablation runner
//! that contrasts the pooling methods on planted-bilinear tasks with
//! budget matching, plus the d sweep and the grounding ablation.

mod grounding;
mod model;

pub use grounding::{GroundingModel, GroundingSpec};
pub use model::{AttentionSpec, Model, ModelCache, ModelGrads, ModelSpec, FULL_BILINEAR_CAP};

use crate::error::{Error, Result};
use crate::nn::{AdamState, PoolingMethod};
use crate::rng::{child_seed, SplitMix64};
use crate::tasks::{BilinearClassificationTask, ClassificationSample, GroundingRankingTask};
use crate::util::parallel_map;
use std::time::Instant;

/// Desk-scale defaults: small enough for seconds-per-run training, large
/// enough to leave headroom between chance and the planted ceiling.
#[derive(Debug, Clone)]
pub struct TaskConfig {
    pub n1: usize,
    pub n2: usize,
    pub classes: usize,
    pub noise_sigma: f64,
    pub train_count: usize,
    pub test_count: usize,
    pub d: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub patience: usize,
    pub lr: f64,
}

impl Default for TaskConfig {
    fn default() -> Self {
        TaskConfig {
            n1: 16,
            n2: 16,
            classes: 8,
            noise_sigma: 0.01,
            train_count: 4000,
            test_count: 1000,
            d: 256,
            epochs: 100,
            batch_size: 32,
            patience: 15,
            lr: 0.01,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_loss: f64,
    pub train_acc: f64,
    pub val_acc: f64,
}

#[derive(Debug)]
pub struct TrainResult {
    pub model: Model,
    pub history: Vec<EpochStats>,
    pub best_epoch: usize,
    pub best_val_acc: f64,
}

/// Trains with Adam and softmax cross-entropy, batch gradients averaged,
/// epoch-level early stopping on validation accuracy, and returns the
/// best-validation snapshot. Fully deterministic given the spec seed.
pub fn train(
    spec: &ModelSpec,
    train_set: &[ClassificationSample],
    val_set: &[ClassificationSample],
    classes: usize,
    epochs: usize,
    batch_size: usize,
    patience: usize,
) -> Result<TrainResult> {
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::InvalidArgument("datasets must be non-empty".into()));
    }
    let n1 = train_set[0].x.len();
    let n2 = train_set[0].q.len();
    if train_set.iter().chain(val_set).any(|s| s.label >= classes) {
        return Err(Error::InvalidArgument(
            "dataset contains labels outside the class range".into(),
        ));
    }
    let mut model = Model::build(spec, n1, n2, classes)?;
    let mut states: Vec<AdamState> = model
        .param_tensors()
        .iter()
        .map(|t| AdamState::new(spec.lr, t.len()))
        .collect();
    let mut best = model.clone();
    let mut best_val = evaluate(&model, val_set)?;
    let mut best_epoch = 0;
    let mut history = Vec::new();
    let mut since_best = 0usize;
    let shuffle_seed = child_seed(spec.seed, 17);
    let mut indices: Vec<usize> = (0..train_set.len()).collect();
    for epoch in 1..=epochs {
        let mut rng = SplitMix64::new(child_seed(shuffle_seed, epoch as u64));
        rng.shuffle(&mut indices);
        let mut loss_sum = 0.0;
        for batch in indices.chunks(batch_size.max(1)) {
            let mut grad_acc: Option<Vec<Vec<f64>>> = None;
            for &i in batch {
                let sample = &train_set[i];
                let cache = model.forward(&sample.x, &sample.q)?;
                let (loss, grads) = model.backward(&cache, sample.label)?;
                if !loss.is_finite() {
                    return Err(Error::TrainingDiverged { epoch });
                }
                loss_sum += loss;
                match &mut grad_acc {
                    None => grad_acc = Some(grads.tensors),
                    Some(acc) => {
                        for (a, g) in acc.iter_mut().zip(&grads.tensors) {
                            for (ai, gi) in a.iter_mut().zip(g) {
                                *ai += gi;
                            }
                        }
                    }
                }
            }
            let mut acc = grad_acc.expect("non-empty batch");
            let scale = 1.0 / batch.len() as f64;
            for tensor in &mut acc {
                for g in tensor.iter_mut() {
                    *g *= scale;
                }
            }
            for ((tensor, grads), state) in model
                .param_tensors()
                .into_iter()
                .zip(&acc)
                .zip(&mut states)
            {
                state.step(tensor, grads)?;
            }
        }
        let train_acc = evaluate(&model, train_set)?;
        let val_acc = evaluate(&model, val_set)?;
        history.push(EpochStats {
            epoch,
            mean_loss: loss_sum / train_set.len() as f64,
            train_acc,
            val_acc,
        });
        if val_acc > best_val {
            best_val = val_acc;
            best = model.clone();
            best_epoch = epoch;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= patience {
                break;
            }
        }
    }
    Ok(TrainResult {
        model: best,
        history,
        best_epoch,
        best_val_acc: best_val,
    })
}

/// Fraction of samples whose argmax prediction (lowest index on ties)
/// matches the label.
pub fn evaluate(model: &Model, data: &[ClassificationSample]) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::InvalidArgument(
            "cannot evaluate on an empty dataset".into(),
        ));
    }
    let mut correct = 0usize;
    for sample in data {
        if model.predict(&sample.x, &sample.q)? == sample.label {
            correct += 1;
        }
    }
    Ok(correct as f64 / data.len() as f64)
}

/// Central finite-difference step; pinned by the verification contracts.
pub const FD_STEP: f64 = 1e-6;

/// Compares the analytic gradient of the full pipeline (every parameter
/// tensor plus both inputs) against central finite differences and returns
/// the largest deviation relative to the largest gradient magnitude.
pub fn grad_check(spec: &ModelSpec, sample: &ClassificationSample, classes: usize) -> Result<f64> {
    let mut model = Model::build(spec, sample.x.len(), sample.q.len(), classes)?;
    let cache = model.forward(&sample.x, &sample.q)?;
    let (_, analytic) = model.backward(&cache, sample.label)?;
    let mut grad_scale: f64 = 0.0;
    for tensor in &analytic.tensors {
        grad_scale = grad_scale.max(crate::util::max_abs(tensor));
    }
    grad_scale = grad_scale
        .max(crate::util::max_abs(&analytic.grad_x))
        .max(crate::util::max_abs(&analytic.grad_q))
        .max(1e-12);
    let mut worst: f64 = 0.0;
    // Parameters.
    let tensor_count = model.param_tensors().len();
    for t in 0..tensor_count {
        let len = model.param_tensors()[t].len();
        for i in 0..len {
            let orig = model.param_tensors()[t][i];
            model.param_tensors()[t][i] = orig + FD_STEP;
            let plus = model.loss(sample)?;
            model.param_tensors()[t][i] = orig - FD_STEP;
            let minus = model.loss(sample)?;
            model.param_tensors()[t][i] = orig;
            let numeric = (plus - minus) / (2.0 * FD_STEP);
            worst = worst.max((analytic.tensors[t][i] - numeric).abs());
        }
    }
    // Inputs.
    let mut probe = sample.clone();
    for i in 0..probe.x.len() {
        let orig = probe.x[i];
        probe.x[i] = orig + FD_STEP;
        let plus = model.loss(&probe)?;
        probe.x[i] = orig - FD_STEP;
        let minus = model.loss(&probe)?;
        probe.x[i] = orig;
        let numeric = (plus - minus) / (2.0 * FD_STEP);
        worst = worst.max((analytic.grad_x[i] - numeric).abs());
    }
    for i in 0..probe.q.len() {
        let orig = probe.q[i];
        probe.q[i] = orig + FD_STEP;
        let plus = model.loss(&probe)?;
        probe.q[i] = orig - FD_STEP;
        let minus = model.loss(&probe)?;
        probe.q[i] = orig;
        let numeric = (plus - minus) / (2.0 * FD_STEP);
        worst = worst.max((analytic.grad_q[i] - numeric).abs());
    }
    Ok(worst / grad_scale)
}

/// One gradient-check pipeline: a pooling method, optionally with
/// attention.
#[derive(Debug, Clone)]
pub struct GradCheckCase {
    pub name: String,
    pub spec: ModelSpec,
    pub n1: usize,
    pub n2: usize,
    pub classes: usize,
}

/// The pipelines the verification suites cover: all six pooling methods,
/// plus attention with 1, 2, and 4 glimpses.
pub fn grad_check_cases() -> Vec<GradCheckCase> {
    let mut cases = Vec::new();
    for method in PoolingMethod::all() {
        let mut spec = ModelSpec::new(method, 8, 0);
        if method == PoolingMethod::ConcatFc {
            spec.fc_hidden = Some(6);
        }
        cases.push(GradCheckCase {
            name: method.label().to_string(),
            spec,
            n1: 8,
            n2: 8,
            classes: 3,
        });
    }
    for glimpses in [1usize, 2, 4] {
        let mut spec = ModelSpec::new(PoolingMethod::Mcb, 8, 0);
        spec.attention = Some(AttentionSpec {
            grid_h: 2,
            grid_w: 2,
            glimpses,
            d: 8,
            hidden: 5,
        });
        cases.push(GradCheckCase {
            name: format!("mcb+attention(glimpses={glimpses})"),
            spec,
            n1: 16,
            n2: 4,
            classes: 3,
        });
    }
    cases
}

/// Margins below which central differences cannot be trusted near the
/// signed-sqrt and ReLU kinks.
const POOL_KINK_MARGIN: f64 = 1e-2;
const RELU_KINK_MARGIN: f64 = 1e-3;

/// Runs [`grad_check`] on a well-conditioned instance of the case: the
/// model seed is advanced until every sketch covers its output buckets,
/// and the sample seed until the forward pass keeps a margin from the
/// non-smooth points.
pub fn grad_check_case(case: &GradCheckCase) -> Result<f64> {
    for model_seed in 0..200u64 {
        let mut spec = case.spec.clone();
        spec.seed = model_seed;
        let model = Model::build(&spec, case.n1, case.n2, case.classes)?;
        if !model.full_sketch_coverage() {
            continue;
        }
        for sample_seed in 0..200u64 {
            let mut rng = SplitMix64::new(child_seed(0xC0FFEE, sample_seed));
            let sample = ClassificationSample {
                x: rng.unit_vec(case.n1),
                q: rng.unit_vec(case.n2),
                label: (sample_seed % case.classes as u64) as usize,
            };
            let cache = model.forward(&sample.x, &sample.q)?;
            let (pool_margin, relu_margin) = model.kink_margins(&cache);
            if pool_margin < POOL_KINK_MARGIN || relu_margin < RELU_KINK_MARGIN {
                continue;
            }
            return grad_check(&spec, &sample, case.classes);
        }
    }
    Err(Error::Numerical(format!(
        "no well-conditioned gradient-check instance found for {}",
        case.name
    )))
}

/// One ablation table row.
#[derive(Debug, Clone)]
pub struct AblationRow {
    pub method: String,
    pub config: String,
    pub param_count: u64,
    pub train_acc: f64,
    pub test_acc: f64,
    pub wall_s: f64,
    pub seed: u64,
}

/// Per-method mean and sample standard deviation over seeds.
#[derive(Debug, Clone)]
pub struct MethodSummary {
    pub method: String,
    pub config: String,
    pub mean_test: f64,
    pub std_test: f64,
    pub mean_train: f64,
    pub std_train: f64,
}

#[derive(Debug, Clone)]
pub struct AblationReport {
    pub rows: Vec<AblationRow>,
    pub summaries: Vec<MethodSummary>,
}

impl AblationReport {
    pub fn summary_for(&self, method: &str) -> Option<&MethodSummary> {
        self.summaries.iter().find(|s| s.method == method)
    }

    fn from_cells(mut rows: Vec<AblationRow>, method_order: &[String]) -> Self {
        let order_of = |m: &str| {
            method_order
                .iter()
                .position(|x| x == m)
                .unwrap_or(usize::MAX)
        };
        rows.sort_by(|a, b| {
            order_of(&a.method)
                .cmp(&order_of(&b.method))
                .then(a.seed.cmp(&b.seed))
        });
        let mut summaries = Vec::new();
        for method in method_order {
            let group: Vec<&AblationRow> = rows.iter().filter(|r| &r.method == method).collect();
            if group.is_empty() {
                continue;
            }
            let tests: Vec<f64> = group.iter().map(|r| r.test_acc).collect();
            let trains: Vec<f64> = group.iter().map(|r| r.train_acc).collect();
            summaries.push(MethodSummary {
                method: method.clone(),
                config: group[0].config.clone(),
                mean_test: mean(&tests),
                std_test: sample_std(&tests),
                mean_train: mean(&trains),
                std_train: sample_std(&trains),
            });
        }
        AblationReport { rows, summaries }
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

pub fn sample_std(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

/// Pooled standard deviation of two equally sized samples.
pub fn pooled_std(s1: f64, s2: f64) -> f64 {
    ((s1 * s1 + s2 * s2) / 2.0).sqrt()
}

/// Builds the model spec for one ablation cell. With budget matching, the
/// non-bilinear methods get a hidden FC stage sized so the total learned
/// parameter count lands within 10% of the compact bilinear row's count.
fn cell_spec(
    method: PoolingMethod,
    cfg: &TaskConfig,
    budget_match: bool,
    seed: u64,
) -> Result<(ModelSpec, String)> {
    let mut spec = ModelSpec::new(method, cfg.d, seed);
    spec.lr = cfg.lr;
    let config_desc = match method {
        PoolingMethod::Mcb => format!("d={}", cfg.d),
        PoolingMethod::FullBilinear => format!("{}x{}", cfg.n1, cfg.n2),
        _ => String::from("-"),
    };
    if budget_match && !matches!(method, PoolingMethod::Mcb | PoolingMethod::FullBilinear) {
        let target = crate::mcb::mcb_param_count(cfg.d as u64, cfg.classes as u64)?;
        let pooled_dim = match method {
            PoolingMethod::EltwiseSum | PoolingMethod::EltwiseProduct => cfg.n1,
            PoolingMethod::Concat | PoolingMethod::ConcatFc => cfg.n1 + cfg.n2,
            _ => unreachable!(),
        };
        // Total with hidden width w: w*pooled + w (bias) + w*classes.
        let per_unit = (pooled_dim + 1 + cfg.classes) as u64;
        let width = ((target as f64 / per_unit as f64).round() as u64).max(1);
        let achieved = width * per_unit;
        let gap = (achieved as f64 - target as f64).abs() / target as f64;
        if gap > 0.10 {
            return Err(Error::Config(format!(
                "cannot budget-match {}: closest hidden width {width} gives {achieved} \
                 parameters vs target {target} ({:.1}% off)",
                method.label(),
                gap * 100.0
            )));
        }
        spec.fc_hidden = Some(width as usize);
        return Ok((spec, format!("fc={width}")));
    }
    if method == PoolingMethod::ConcatFc {
        let width = spec.fc_hidden.unwrap_or(64);
        return Ok((spec, format!("fc={width}")));
    }
    Ok((spec, config_desc))
}

/// Trains every method on identical data per seed and reports accuracy,
/// parameter counts, and wall time. Cells may run in parallel; results are
/// deterministic regardless of thread count.
pub fn ablate(
    cfg: &TaskConfig,
    methods: &[PoolingMethod],
    budget_match: bool,
    seeds: &[u64],
) -> Result<AblationReport> {
    if methods.is_empty() || seeds.is_empty() {
        return Err(Error::InvalidArgument(
            "need at least one method and one seed".into(),
        ));
    }
    let mut cells = Vec::new();
    for &method in methods {
        for &seed in seeds {
            let (spec, config) = cell_spec(method, cfg, budget_match, child_seed(seed, 99))?;
            cells.push((method, seed, spec, config));
        }
    }
    let results = parallel_map(cells, |(method, seed, spec, config)| {
        run_cell(cfg, method.label().to_string(), config, spec, seed)
    });
    let rows = results.into_iter().collect::<Result<Vec<_>>>()?;
    let order: Vec<String> = methods.iter().map(|m| m.label().to_string()).collect();
    Ok(AblationReport::from_cells(rows, &order))
}

fn run_cell(
    cfg: &TaskConfig,
    method_label: String,
    config: String,
    spec: ModelSpec,
    seed: u64,
) -> Result<AblationRow> {
    let task =
        BilinearClassificationTask::new(cfg.n1, cfg.n2, cfg.classes, cfg.noise_sigma, seed)?;
    let train_set = task.generate(cfg.train_count)?;
    let test_set = task.generate_offset(cfg.train_count, cfg.test_count)?;
    let started = Instant::now();
    let result = train(
        &spec,
        &train_set,
        &test_set,
        cfg.classes,
        cfg.epochs,
        cfg.batch_size,
        cfg.patience,
    )?;
    let wall_s = started.elapsed().as_secs_f64();
    let train_acc = evaluate(&result.model, &train_set)?;
    let test_acc = evaluate(&result.model, &test_set)?;
    Ok(AblationRow {
        method: method_label,
        config,
        param_count: result.model.param_count(),
        train_acc,
        test_acc,
        wall_s,
        seed,
    })
}

/// Trains the compact bilinear method across output dimensions; rows are
/// labeled by d.
pub fn sweep_d(cfg: &TaskConfig, ds: &[usize], seeds: &[u64]) -> Result<AblationReport> {
    if ds.is_empty() || seeds.is_empty() {
        return Err(Error::InvalidArgument(
            "need at least one d and one seed".into(),
        ));
    }
    let mut cells = Vec::new();
    for &d in ds {
        for &seed in seeds {
            let mut cell_cfg = cfg.clone();
            cell_cfg.d = d;
            let mut spec = ModelSpec::new(PoolingMethod::Mcb, d, child_seed(seed, 99));
            spec.lr = cfg.lr;
            cells.push((cell_cfg, d, seed, spec));
        }
    }
    let results = parallel_map(cells, |(cell_cfg, d, seed, spec)| {
        run_cell(
            &cell_cfg,
            format!("mcb(d={d})"),
            format!("d={d}"),
            spec,
            seed,
        )
    });
    let rows = results.into_iter().collect::<Result<Vec<_>>>()?;
    let order: Vec<String> = ds.iter().map(|d| format!("mcb(d={d})")).collect();
    Ok(AblationReport::from_cells(rows, &order))
}

/// Grounding counterpart of [`ablate`]: per-method mean top-1 accuracy on
/// the proposal-ranking task.
pub fn ablate_grounding(
    cfg: &GroundingConfig,
    methods: &[PoolingMethod],
    seeds: &[u64],
) -> Result<AblationReport> {
    if methods.is_empty() || seeds.is_empty() {
        return Err(Error::InvalidArgument(
            "need at least one method and one seed".into(),
        ));
    }
    let mut cells = Vec::new();
    for &method in methods {
        for &seed in seeds {
            cells.push((method, seed));
        }
    }
    let results = parallel_map(cells, |(method, seed)| -> Result<AblationRow> {
        let task = GroundingRankingTask::new(
            cfg.n_v,
            cfg.n_p,
            cfg.proposals,
            cfg.noise_sigma,
            seed,
        )?;
        let train_set = task.generate(cfg.train_count)?;
        let test_set = task.generate_offset(cfg.train_count, cfg.test_count)?;
        let spec = GroundingSpec {
            pooling: method,
            d: cfg.d,
            embed_dim: cfg.n_p,
            normalization: false,
            lr: cfg.lr,
            seed: child_seed(seed, 7),
        };
        let started = Instant::now();
        let (model, _history) = grounding::train_grounding(
            &spec,
            &train_set,
            &test_set,
            cfg.epochs,
            cfg.batch_size,
            cfg.patience,
        )?;
        let wall_s = started.elapsed().as_secs_f64();
        let train_acc = grounding::evaluate_grounding(&model, &train_set)?;
        let test_acc = grounding::evaluate_grounding(&model, &test_set)?;
        let config = match method {
            PoolingMethod::Mcb => format!("d={}", cfg.d),
            _ => String::from("-"),
        };
        Ok(AblationRow {
            method: method.label().to_string(),
            config,
            param_count: model.param_count(),
            train_acc,
            test_acc,
            wall_s,
            seed,
        })
    });
    let rows = results.into_iter().collect::<Result<Vec<_>>>()?;
    let order: Vec<String> = methods.iter().map(|m| m.label().to_string()).collect();
    Ok(AblationReport::from_cells(rows, &order))
}

pub use grounding::{evaluate_grounding, train_grounding};

/// Desk-scale grounding defaults.
#[derive(Debug, Clone)]
pub struct GroundingConfig {
    pub n_v: usize,
    pub n_p: usize,
    pub proposals: usize,
    pub noise_sigma: f64,
    pub train_count: usize,
    pub test_count: usize,
    pub d: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub patience: usize,
    pub lr: f64,
}

impl Default for GroundingConfig {
    fn default() -> Self {
        GroundingConfig {
            n_v: 8,
            n_p: 8,
            proposals: 8,
            noise_sigma: 0.05,
            train_count: 2000,
            test_count: 500,
            d: 64,
            epochs: 60,
            batch_size: 32,
            patience: 15,
            lr: 0.01,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tasks::GroundingRankingTask;

    fn toy_config() -> TaskConfig {
        TaskConfig {
            n1: 4,
            n2: 4,
            classes: 2,
            noise_sigma: 0.0,
            train_count: 400,
            test_count: 100,
            d: 16,
            epochs: 50,
            batch_size: 32,
            patience: 50,
            ..TaskConfig::default()
        }
    }

    #[test]
    fn zero_epochs_returns_initialized_model() {
        let cfg = toy_config();
        let task = BilinearClassificationTask::new(4, 4, 2, 0.0, 1).unwrap();
        let train_set = task.generate(100).unwrap();
        let val_set = task.generate_offset(100, 50).unwrap();
        let spec = ModelSpec::new(PoolingMethod::Mcb, cfg.d, 5);
        let result = train(&spec, &train_set, &val_set, 2, 0, 32, 15).unwrap();
        assert!(result.history.is_empty());
        let fresh = Model::build(&spec, 4, 4, 2).unwrap();
        let trained_acc = evaluate(&result.model, &val_set).unwrap();
        let fresh_acc = evaluate(&fresh, &val_set).unwrap();
        assert_eq!(trained_acc, fresh_acc);
    }

    #[test]
    fn mcb_learns_the_separable_toy_task() {
        let cfg = toy_config();
        let task = BilinearClassificationTask::new(cfg.n1, cfg.n2, cfg.classes, 0.0, 3).unwrap();
        let train_set = task.generate(cfg.train_count).unwrap();
        let val_set = task
            .generate_offset(cfg.train_count, cfg.test_count)
            .unwrap();
        // The planted certificate guarantees linear separability in the raw
        // bilinear space, so the toy runs without the signed-sqrt warp and
        // with d comfortably above the outer-product dimension.
        let mut spec = ModelSpec::new(PoolingMethod::Mcb, 128, 7);
        spec.lr = 0.1;
        spec.normalization = false;
        let result = train(&spec, &train_set, &val_set, 2, 50, 32, 50).unwrap();
        let train_acc = evaluate(&result.model, &train_set).unwrap();
        assert!(
            train_acc >= 0.99,
            "toy task should be learnable, got {train_acc}"
        );
    }

    #[test]
    fn training_is_bitwise_deterministic() {
        let task = BilinearClassificationTask::new(4, 4, 2, 0.0, 9).unwrap();
        let train_set = task.generate(120).unwrap();
        let val_set = task.generate_offset(120, 40).unwrap();
        let spec = ModelSpec::new(PoolingMethod::Mcb, 8, 21);
        let mut a = train(&spec, &train_set, &val_set, 2, 5, 16, 10)
            .unwrap()
            .model;
        let mut b = train(&spec, &train_set, &val_set, 2, 5, 16, 10)
            .unwrap()
            .model;
        for (ta, tb) in a.param_tensors().iter().zip(b.param_tensors().iter()) {
            assert_eq!(ta.len(), tb.len());
            for (x, y) in ta.iter().zip(tb.iter()) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }

    #[test]
    fn full_bilinear_model_can_represent_the_planted_scorer() {
        let task = BilinearClassificationTask::new(5, 5, 3, 0.0, 13).unwrap();
        let data = task.generate(300).unwrap();
        let mut spec = ModelSpec::new(PoolingMethod::FullBilinear, 0, 1);
        spec.normalization = false;
        let mut model = Model::build(&spec, 5, 5, 3).unwrap();
        model.classifier.weight = task.planted().concat();
        assert_eq!(evaluate(&model, &data).unwrap(), 1.0);
    }

    #[test]
    fn constant_logits_score_at_chance() {
        let task = BilinearClassificationTask::new(6, 6, 4, 0.0, 17).unwrap();
        let data = task.generate(2000).unwrap();
        let spec = ModelSpec::new(PoolingMethod::Concat, 0, 1);
        let mut model = Model::build(&spec, 6, 6, 4).unwrap();
        model.classifier.weight.iter_mut().for_each(|w| *w = 0.0);
        let acc = evaluate(&model, &data).unwrap();
        // Constant logits always predict class 0.
        assert!((acc - 0.25).abs() < 0.1, "chance-level accuracy, got {acc}");
    }

    #[test]
    fn evaluate_rejects_empty_dataset() {
        let spec = ModelSpec::new(PoolingMethod::Concat, 0, 1);
        let model = Model::build(&spec, 4, 4, 2).unwrap();
        assert!(evaluate(&model, &[]).is_err());
    }

    #[test]
    fn divergence_reports_the_epoch() {
        let task = BilinearClassificationTask::new(4, 4, 2, 0.0, 19).unwrap();
        let train_set = task.generate(64).unwrap();
        let val_set = task.generate_offset(64, 32).unwrap();
        // Two stacked layers at an absurd step size overflow the logits.
        let mut spec = ModelSpec::new(PoolingMethod::ConcatFc, 0, 3);
        spec.fc_hidden = Some(8);
        spec.lr = 1e200;
        match train(&spec, &train_set, &val_set, 2, 5, 16, 10) {
            Err(Error::TrainingDiverged { epoch }) => assert!(epoch >= 1),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn grad_checks_pass_for_mcb_and_product_pipelines() {
        for case in grad_check_cases() {
            if case.name == "mcb" || case.name == "eltwise-product" {
                let err = grad_check_case(&case).unwrap();
                assert!(err < 1e-5, "{}: relative error {err}", case.name);
            }
        }
    }

    #[test]
    fn grad_check_covers_attention_case() {
        let case = grad_check_cases()
            .into_iter()
            .find(|c| c.name.contains("glimpses=2"))
            .unwrap();
        let err = grad_check_case(&case).unwrap();
        assert!(err < 1e-5, "attention relative error {err}");
    }

    #[test]
    fn single_method_ablation_row_counts_and_params() {
        let cfg = TaskConfig {
            train_count: 200,
            test_count: 80,
            epochs: 2,
            ..toy_config()
        };
        let report = ablate(&cfg, &[PoolingMethod::Mcb], false, &[1, 2]).unwrap();
        assert_eq!(report.rows.len(), 2);
        assert_eq!(report.summaries.len(), 1);
        for row in &report.rows {
            assert_eq!(
                row.param_count,
                crate::mcb::mcb_param_count(cfg.d as u64, cfg.classes as u64).unwrap()
            );
        }
    }

    #[test]
    fn full_bilinear_param_count_matches_closed_form() {
        let cfg = TaskConfig {
            train_count: 150,
            test_count: 50,
            epochs: 1,
            ..toy_config()
        };
        let report = ablate(&cfg, &[PoolingMethod::FullBilinear], false, &[1]).unwrap();
        assert_eq!(
            report.rows[0].param_count,
            crate::mcb::full_bilinear_param_count(
                cfg.n1 as u64,
                cfg.n2 as u64,
                cfg.classes as u64
            )
            .unwrap()
        );
    }

    #[test]
    fn oversized_full_bilinear_is_refused() {
        let spec = ModelSpec::new(PoolingMethod::FullBilinear, 0, 1);
        match Model::build(&spec, 2048, 2048, 3000) {
            Err(Error::Config(msg)) => assert!(msg.contains("full bilinear")),
            other => panic!("expected a configuration error, got {other:?}"),
        }
    }

    #[test]
    fn infeasible_budget_match_names_the_method() {
        let cfg = TaskConfig {
            d: 1,
            classes: 2,
            ..toy_config()
        };
        match ablate(&cfg, &[PoolingMethod::EltwiseSum], true, &[1]) {
            Err(Error::Config(msg)) => assert!(msg.contains("eltwise-sum"), "{msg}"),
            other => panic!("expected a configuration error, got {other:?}"),
        }
    }

    #[test]
    fn budget_match_equalizes_parameter_counts() {
        let cfg = TaskConfig {
            train_count: 150,
            test_count: 50,
            epochs: 1,
            ..TaskConfig::default()
        };
        let report = ablate(
            &cfg,
            &[PoolingMethod::Mcb, PoolingMethod::Concat, PoolingMethod::EltwiseSum],
            true,
            &[1],
        )
        .unwrap();
        let target = report
            .rows
            .iter()
            .find(|r| r.method == "mcb")
            .unwrap()
            .param_count as f64;
        for row in &report.rows {
            let gap = (row.param_count as f64 - target).abs() / target;
            assert!(gap <= 0.10, "{}: {} vs {target}", row.method, row.param_count);
        }
    }

    #[test]
    fn grounding_head_learns_the_two_proposal_task() {
        let task = GroundingRankingTask::new(6, 6, 2, 0.0, 23).unwrap();
        let train_set = task.generate(600).unwrap();
        let val_set = task.generate_offset(600, 200).unwrap();
        let spec = GroundingSpec {
            pooling: PoolingMethod::Mcb,
            d: 64,
            embed_dim: 6,
            normalization: false,
            lr: 0.1,
            seed: 3,
        };
        let (model, _) = train_grounding(&spec, &train_set, &val_set, 100, 32, 100).unwrap();
        let acc = evaluate_grounding(&model, &val_set).unwrap();
        assert!(acc >= 0.95, "grounding top-1 {acc}");
    }

    #[test]
    fn untrained_grounding_head_scores_near_chance() {
        let task = GroundingRankingTask::new(8, 8, 8, 0.0, 29).unwrap();
        let data = task.generate(1500).unwrap();
        let spec = GroundingSpec {
            pooling: PoolingMethod::Mcb,
            d: 32,
            embed_dim: 8,
            normalization: true,
            lr: crate::nn::ADAM_DEFAULT_LR,
            seed: 4,
        };
        let model = GroundingModel::build(&spec, 8, 8).unwrap();
        let acc = evaluate_grounding(&model, &data).unwrap();
        assert!(
            (acc - 0.125).abs() < 0.07,
            "untrained head should sit near 1/8, got {acc}"
        );
    }

    #[test]
    #[allow(clippy::needless_range_loop)]
    fn grounding_gradients_match_finite_differences() {
        let task = GroundingRankingTask::new(5, 5, 3, 0.0, 31).unwrap();
        let items = task.generate(40).unwrap();
        let spec = GroundingSpec {
            pooling: PoolingMethod::Mcb,
            d: 8,
            embed_dim: 5,
            normalization: true,
            lr: crate::nn::ADAM_DEFAULT_LR,
            seed: 11,
        };
        'seed: for model_seed in 0..100u64 {
            let mut spec = spec.clone();
            spec.seed = model_seed;
            let mut model = GroundingModel::build(&spec, 5, 5).unwrap();
            if let crate::nn::Pooling::Mcb(op) = &model.pooling {
                if !op.covers_all_outputs() {
                    continue;
                }
            }
            for item in &items {
                // Keep a margin from the signed-sqrt kink on every proposal.
                let margins_ok = item.proposals.iter().all(|p| {
                    let e = crate::nn::l2_normalize_forward(&model.embed.forward(p).unwrap());
                    let ph = crate::nn::l2_normalize_forward(&item.phrase);
                    let (pooled, _) = model.pooling.forward(&e, &ph).unwrap();
                    pooled.iter().all(|v| v.abs() > 1e-2)
                });
                if !margins_ok {
                    continue;
                }
                let (_, analytic) = model.backward(item).unwrap();
                let analytic_tensors = [analytic.embed_weight.clone(),
                    analytic.embed_bias.clone(),
                    analytic.scorer_weight.clone()];
                let scale = analytic_tensors
                    .iter()
                    .map(|t| crate::util::max_abs(t))
                    .fold(1e-12, f64::max);
                let h = FD_STEP;
                let mut worst = 0.0f64;
                for t in 0..3 {
                    for i in 0..model.param_tensors()[t].len() {
                        let orig = model.param_tensors()[t][i];
                        model.param_tensors()[t][i] = orig + h;
                        let plus = model.loss(item).unwrap();
                        model.param_tensors()[t][i] = orig - h;
                        let minus = model.loss(item).unwrap();
                        model.param_tensors()[t][i] = orig;
                        let numeric = (plus - minus) / (2.0 * h);
                        worst = worst.max((analytic_tensors[t][i] - numeric).abs());
                    }
                }
                assert!(worst / scale < 1e-5, "relative error {}", worst / scale);
                break 'seed;
            }
        }
    }
}
