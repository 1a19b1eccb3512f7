//! Runtime verification suites: FFT oracles, sketch identities, pooling
//! oracle equivalence, kernel unbiasedness, and gradient checks. Each
//! suite reports its measured worst-case error against a pinned tolerance;
//! the verify command exits nonzero if any suite fails.

use crate::error::Result;
use crate::fft::{circular_convolve, fft_forward, fft_inverse, Complex};
use crate::harness::{grad_check_case, grad_check_cases};
use crate::mcb::{full_bilinear_param_count, mcb_param_count, McbOperator};
use crate::nn;
use crate::rng::SplitMix64;
use crate::sketch::{outer_product_vec, CountSketchParams};
use crate::util::{dot, max_abs, max_abs_diff};

#[derive(Debug, Clone)]
pub struct SuiteResult {
    pub name: &'static str,
    pub worst: f64,
    pub tolerance: f64,
}

impl SuiteResult {
    pub fn passed(&self) -> bool {
        self.worst <= self.tolerance
    }
}

/// Runs every suite. A tolerance override replaces each suite's default
/// threshold (0 forces a failure report).
pub fn run_all(tolerance_override: Option<f64>) -> Result<Vec<SuiteResult>> {
    let mut results = vec![
        fft_dft_oracle()?,
        fft_round_trip()?,
        fft_parseval()?,
        fft_linearity()?,
        convolve_oracle()?,
        convolve_commutativity()?,
        sketch_adjoint()?,
        sketch_uniformity()?,
        sketch_unbiased_inner_product()?,
        outer_product_identity()?,
        pooling_oracle_equivalence()?,
        pooling_gradient()?,
        kernel_unbiasedness()?,
        layer_gradients()?,
        pipeline_gradients()?,
        param_counts()?,
    ];
    if let Some(tol) = tolerance_override {
        for r in &mut results {
            r.tolerance = tol;
        }
    }
    Ok(results)
}

fn naive_dft(v: &[Complex]) -> Vec<Complex> {
    let n = v.len();
    (0..n)
        .map(|k| {
            let mut acc = Complex::ZERO;
            for (j, x) in v.iter().enumerate() {
                let theta = -2.0 * std::f64::consts::PI * (j * k) as f64 / n as f64;
                acc = acc + *x * Complex::cis(theta);
            }
            acc
        })
        .collect()
}

fn naive_convolve(a: &[f64], b: &[f64]) -> Vec<f64> {
    let n = a.len();
    (0..n)
        .map(|k| (0..n).map(|j| a[j] * b[(k + n - j) % n]).sum())
        .collect()
}

fn random_complex(rng: &mut SplitMix64, n: usize) -> Vec<Complex> {
    (0..n)
        .map(|_| Complex::new(rng.next_range(-1.0, 1.0), rng.next_range(-1.0, 1.0)))
        .collect()
}

fn max_cdiff(a: &[Complex], b: &[Complex]) -> f64 {
    a.iter().zip(b).fold(0.0f64, |acc, (x, y)| {
        acc.max((x.re - y.re).abs()).max((x.im - y.im).abs())
    })
}

fn fft_dft_oracle() -> Result<SuiteResult> {
    let mut rng = SplitMix64::new(1000);
    let mut worst = 0.0f64;
    for n in (1..=128usize).chain([255, 256, 500, 512]) {
        let v = random_complex(&mut rng, n);
        worst = worst.max(max_cdiff(&fft_forward(&v)?, &naive_dft(&v)));
    }
    Ok(SuiteResult {
        name: "fft-dft-oracle",
        worst,
        tolerance: 1e-9,
    })
}

fn fft_round_trip() -> Result<SuiteResult> {
    let mut rng = SplitMix64::new(1001);
    let mut worst = 0.0f64;
    for n in 1..=1024usize {
        let v = random_complex(&mut rng, n);
        let back = fft_inverse(&fft_forward(&v)?)?;
        worst = worst.max(max_cdiff(&v, &back));
    }
    Ok(SuiteResult {
        name: "fft-round-trip",
        worst,
        tolerance: 1e-10,
    })
}

fn fft_parseval() -> Result<SuiteResult> {
    let mut rng = SplitMix64::new(1002);
    let mut worst = 0.0f64;
    for n in [3usize, 8, 17, 64, 100, 255, 256, 1000] {
        let v = random_complex(&mut rng, n);
        let time: f64 = v.iter().map(|z| z.norm_sq()).sum();
        let spec: f64 = fft_forward(&v)?.iter().map(|z| z.norm_sq()).sum::<f64>() / n as f64;
        worst = worst.max(((time - spec) / time).abs());
    }
    Ok(SuiteResult {
        name: "fft-parseval",
        worst,
        tolerance: 1e-10,
    })
}

fn fft_linearity() -> Result<SuiteResult> {
    let mut rng = SplitMix64::new(1003);
    let mut worst = 0.0f64;
    for n in [5usize, 16, 33, 128] {
        let u = random_complex(&mut rng, n);
        let v = random_complex(&mut rng, n);
        let (alpha, beta) = (1.7, -0.3);
        let mixed: Vec<Complex> = u
            .iter()
            .zip(&v)
            .map(|(x, y)| x.scale(alpha) + y.scale(beta))
            .collect();
        let lhs = fft_forward(&mixed)?;
        let fu = fft_forward(&u)?;
        let fv = fft_forward(&v)?;
        let rhs: Vec<Complex> = fu
            .iter()
            .zip(&fv)
            .map(|(x, y)| x.scale(alpha) + y.scale(beta))
            .collect();
        worst = worst.max(max_cdiff(&lhs, &rhs));
    }
    Ok(SuiteResult {
        name: "fft-linearity",
        worst,
        tolerance: 1e-10,
    })
}

fn convolve_oracle() -> Result<SuiteResult> {
    let mut rng = SplitMix64::new(1004);
    let mut worst = 0.0f64;
    for n in 1..=256usize {
        let a: Vec<f64> = (0..n).map(|_| rng.next_range(-1.0, 1.0)).collect();
        let b: Vec<f64> = (0..n).map(|_| rng.next_range(-1.0, 1.0)).collect();
        worst = worst.max(max_abs_diff(&circular_convolve(&a, &b)?, &naive_convolve(&a, &b)));
    }
    Ok(SuiteResult {
        name: "convolve-oracle",
        worst,
        tolerance: 1e-9,
    })
}

fn convolve_commutativity() -> Result<SuiteResult> {
    let mut rng = SplitMix64::new(1005);
    let mut worst = 0.0f64;
    for n in [4usize, 9, 30, 128, 200] {
        let a: Vec<f64> = (0..n).map(|_| rng.next_range(-1.0, 1.0)).collect();
        let b: Vec<f64> = (0..n).map(|_| rng.next_range(-1.0, 1.0)).collect();
        worst = worst.max(max_abs_diff(
            &circular_convolve(&a, &b)?,
            &circular_convolve(&b, &a)?,
        ));
    }
    Ok(SuiteResult {
        name: "convolve-commutativity",
        worst,
        tolerance: 1e-10,
    })
}

fn sketch_adjoint() -> Result<SuiteResult> {
    let mut rng = SplitMix64::new(1006);
    let mut worst = 0.0f64;
    for trial in 0..1000u64 {
        let n = 1 + (trial % 24) as usize;
        let d = 1 + (trial % 9) as usize;
        let p = CountSketchParams::sample(trial, n, d)?;
        let v: Vec<f64> = (0..n).map(|_| rng.next_range(-1.0, 1.0)).collect();
        let g: Vec<f64> = (0..d).map(|_| rng.next_range(-1.0, 1.0)).collect();
        let sketched = p.apply(&v)?;
        let lhs = dot(&sketched, &g);
        let rhs = dot(&v, &p.apply_adjoint(&g)?);
        let scale = (crate::util::l2_norm(&sketched) * crate::util::l2_norm(&g)).max(1e-30);
        worst = worst.max((lhs - rhs).abs() / scale);
    }
    Ok(SuiteResult {
        name: "sketch-adjoint",
        worst,
        tolerance: 1e-12,
    })
}

fn sketch_uniformity() -> Result<SuiteResult> {
    let n = 100_000usize;
    let p = CountSketchParams::sample(2024, n, 4)?;
    let mut counts = [0usize; 4];
    for h in p.h_one_based() {
        counts[h - 1] += 1;
    }
    let sigma = (0.25 * 0.75 / n as f64).sqrt();
    let worst = counts
        .iter()
        .map(|&c| (c as f64 / n as f64 - 0.25).abs())
        .fold(0.0f64, f64::max);
    Ok(SuiteResult {
        name: "sketch-hash-uniformity",
        worst,
        tolerance: 3.0 * sigma,
    })
}

fn sketch_unbiased_inner_product() -> Result<SuiteResult> {
    let mut rng = SplitMix64::new(2718);
    let (n, d, m) = (16usize, 64usize, 2000usize);
    let u = rng.unit_vec(n);
    let v = rng.unit_vec(n);
    let target = dot(&u, &v);
    let estimates: Vec<f64> = (0..m)
        .map(|i| {
            let p = CountSketchParams::sample(10_000 + i as u64, n, d)?;
            Ok(dot(&p.apply(&u)?, &p.apply(&v)?))
        })
        .collect::<Result<Vec<_>>>()?;
    let mean = estimates.iter().sum::<f64>() / m as f64;
    let var = estimates.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>() / (m - 1) as f64;
    let stderr = (var / m as f64).sqrt();
    Ok(SuiteResult {
        name: "sketch-unbiased-inner-product",
        worst: (mean - target).abs() / stderr,
        tolerance: 4.0,
    })
}

fn outer_product_identity() -> Result<SuiteResult> {
    let mut rng = SplitMix64::new(1007);
    let mut worst = 0.0f64;
    for (n1, n2, d) in [(32usize, 32usize, 64usize), (31, 17, 40), (8, 32, 64), (4, 3, 8)] {
        let p1 = CountSketchParams::sample(500 + n1 as u64, n1, d)?;
        let p2 = CountSketchParams::sample(900 + n2 as u64, n2, d)?;
        let x: Vec<f64> = (0..n1).map(|_| rng.next_range(-1.0, 1.0)).collect();
        let q: Vec<f64> = (0..n2).map(|_| rng.next_range(-1.0, 1.0)).collect();
        let direct = p1
            .outer_product_params(&p2)?
            .apply(&outer_product_vec(&x, &q))?;
        let convolved = circular_convolve(&p1.apply(&x)?, &p2.apply(&q)?)?;
        worst = worst.max(max_abs_diff(&direct, &convolved));
    }
    Ok(SuiteResult {
        name: "outer-product-identity",
        worst,
        tolerance: 1e-9,
    })
}

/// Explicit oracle: sketch the flattened outer product of all inputs with
/// the chained combined params.
fn explicit_outer_sketch(op: &McbOperator, vs: &[&[f64]]) -> Result<Vec<f64>> {
    let mut combined = op.params(0).clone();
    let mut flat = vs[0].to_vec();
    for (k, v) in vs.iter().enumerate().skip(1) {
        combined = combined.outer_product_params(op.params(k))?;
        flat = outer_product_vec(&flat, v);
    }
    combined.apply(&flat)
}

/// The pooling oracle-equivalence suite used by the acceptance gate:
/// `seeds` random shapes with n1, n2 in 1..=32 and d in 1..=64, plus a
/// triple-input case per ten seeds.
pub fn pooling_oracle_worst(seeds: u64) -> Result<f64> {
    let mut rng = SplitMix64::new(4242);
    let mut worst = 0.0f64;
    for seed in 0..seeds {
        let n1 = 1 + rng.next_below(32) as usize;
        let n2 = 1 + rng.next_below(32) as usize;
        let d = 1 + rng.next_below(64) as usize;
        let op = McbOperator::new(seed, &[n1, n2], d)?;
        let x: Vec<f64> = (0..n1).map(|_| rng.next_range(-1.0, 1.0)).collect();
        let q: Vec<f64> = (0..n2).map(|_| rng.next_range(-1.0, 1.0)).collect();
        let fast = op.forward(&[&x, &q])?.output;
        let slow = explicit_outer_sketch(&op, &[&x, &q])?;
        worst = worst.max(max_abs_diff(&fast, &slow));
        if seed % 10 == 0 {
            let n3 = 1 + rng.next_below(8) as usize;
            let op3 = McbOperator::new(seed, &[n1.min(8), n2.min(8), n3], d)?;
            let a: Vec<f64> = (0..n1.min(8)).map(|_| rng.next_range(-1.0, 1.0)).collect();
            let b: Vec<f64> = (0..n2.min(8)).map(|_| rng.next_range(-1.0, 1.0)).collect();
            let c: Vec<f64> = (0..n3).map(|_| rng.next_range(-1.0, 1.0)).collect();
            let fast = op3.forward(&[&a, &b, &c])?.output;
            let slow = explicit_outer_sketch(&op3, &[&a, &b, &c])?;
            worst = worst.max(max_abs_diff(&fast, &slow));
        }
    }
    Ok(worst)
}

fn pooling_oracle_equivalence() -> Result<SuiteResult> {
    Ok(SuiteResult {
        name: "pooling-oracle-equivalence",
        worst: pooling_oracle_worst(100)?,
        tolerance: 1e-9,
    })
}

/// Worst relative error of the pooling backward pass against central
/// finite differences over `cases` random configurations (including
/// three-input operators).
pub fn pooling_gradient_worst(cases: u64) -> Result<f64> {
    let mut rng = SplitMix64::new(5150);
    let mut worst = 0.0f64;
    for case in 0..cases {
        let arity = if case % 3 == 2 { 3 } else { 2 };
        let dims: Vec<usize> = (0..arity).map(|_| 2 + rng.next_below(5) as usize).collect();
        let d = 2 + rng.next_below(12) as usize;
        let op = McbOperator::new(case, &dims, d)?;
        let vs: Vec<Vec<f64>> = dims
            .iter()
            .map(|&n| (0..n).map(|_| rng.next_range(-1.0, 1.0)).collect())
            .collect();
        let g: Vec<f64> = (0..d).map(|_| rng.next_range(-1.0, 1.0)).collect();
        let refs: Vec<&[f64]> = vs.iter().map(|v| v.as_slice()).collect();
        let rec = op.forward(&refs)?;
        let grads = op.backward(&rec, &g)?;
        let scale = grads.iter().map(|t| max_abs(t)).fold(1e-12, f64::max);
        let h = 1e-6;
        for (j, grad) in grads.iter().enumerate() {
            for c in 0..grad.len() {
                let mut plus = vs.clone();
                plus[j][c] += h;
                let mut minus = vs.clone();
                minus[j][c] -= h;
                let eval = |vecs: &[Vec<f64>]| -> Result<f64> {
                    let refs: Vec<&[f64]> = vecs.iter().map(|v| v.as_slice()).collect();
                    Ok(dot(&op.forward(&refs)?.output, &g))
                };
                let numeric = (eval(&plus)? - eval(&minus)?) / (2.0 * h);
                worst = worst.max((grad[c] - numeric).abs() / scale);
            }
        }
    }
    Ok(worst)
}

fn pooling_gradient() -> Result<SuiteResult> {
    Ok(SuiteResult {
        name: "pooling-gradient",
        worst: pooling_gradient_worst(100)?,
        tolerance: 1e-5,
    })
}

/// Kernel unbiasedness at the acceptance scale: unit-norm inputs of
/// dimension 16, d = 512, `operators` independently seeded operators;
/// returns |mean - <x,x'><q,q'>| / standard error.
pub fn kernel_unbiasedness_sigma(operators: usize) -> Result<f64> {
    let mut rng = SplitMix64::new(31415);
    let (n, d) = (16usize, 512usize);
    let x = rng.unit_vec(n);
    let xp = rng.unit_vec(n);
    let q = rng.unit_vec(n);
    let qp = rng.unit_vec(n);
    let target = dot(&x, &xp) * dot(&q, &qp);
    let estimates: Vec<f64> = (0..operators)
        .map(|i| {
            let op = McbOperator::new(70_000 + i as u64, &[n, n], d)?;
            let a = op.forward(&[&x, &q])?.output;
            let b = op.forward(&[&xp, &qp])?.output;
            Ok(dot(&a, &b))
        })
        .collect::<Result<Vec<_>>>()?;
    let m = estimates.len() as f64;
    let mean = estimates.iter().sum::<f64>() / m;
    let var = estimates.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>() / (m - 1.0);
    let stderr = (var / m).sqrt();
    Ok((mean - target).abs() / stderr)
}

fn kernel_unbiasedness() -> Result<SuiteResult> {
    Ok(SuiteResult {
        name: "kernel-unbiasedness",
        worst: kernel_unbiasedness_sigma(2000)?,
        tolerance: 4.0,
    })
}


fn layer_gradients() -> Result<SuiteResult> {
    let mut rng = SplitMix64::new(6006);
    let h = 1e-6;
    let mut worst = 0.0f64;
    for trial in 0..50u64 {
        let n = 2 + (trial % 6) as usize;
        // Signed sqrt, inputs kept away from the kink.
        let v: Vec<f64> = (0..n)
            .map(|_| {
                let x = rng.next_range(0.1, 2.0);
                if rng.next_sign() > 0.0 {
                    x
                } else {
                    -x
                }
            })
            .collect();
        let g: Vec<f64> = (0..n).map(|_| rng.next_range(-1.0, 1.0)).collect();
        let analytic = nn::signed_sqrt_backward(&v, &g);
        let scale = max_abs(&analytic).max(1e-12);
        for i in 0..n {
            let mut plus = v.clone();
            plus[i] += h;
            let mut minus = v.clone();
            minus[i] -= h;
            let numeric = (dot(&nn::signed_sqrt_forward(&plus), &g)
                - dot(&nn::signed_sqrt_forward(&minus), &g))
                / (2.0 * h);
            worst = worst.max((analytic[i] - numeric).abs() / scale);
        }
        // L2 normalization.
        let analytic = nn::l2_normalize_backward(&v, &g);
        let scale = max_abs(&analytic).max(1e-12);
        for i in 0..n {
            let mut plus = v.clone();
            plus[i] += h;
            let mut minus = v.clone();
            minus[i] -= h;
            let numeric = (dot(&nn::l2_normalize_forward(&plus), &g)
                - dot(&nn::l2_normalize_forward(&minus), &g))
                / (2.0 * h);
            worst = worst.max((analytic[i] - numeric).abs() / scale);
        }
        // Linear layer, all three gradients.
        let out_dim = 1 + (trial % 4) as usize;
        let mut layer = nn::LinearLayer::init(n, out_dim, &mut rng);
        let gout: Vec<f64> = (0..out_dim).map(|_| rng.next_range(-1.0, 1.0)).collect();
        let grads = layer.backward(&v, &gout)?;
        let scale = max_abs(&grads.weight)
            .max(max_abs(&grads.input))
            .max(max_abs(&grads.bias))
            .max(1e-12);
        for w in 0..layer.weight.len() {
            let orig = layer.weight[w];
            layer.weight[w] = orig + h;
            let plus = dot(&layer.forward(&v)?, &gout);
            layer.weight[w] = orig - h;
            let minus = dot(&layer.forward(&v)?, &gout);
            layer.weight[w] = orig;
            worst = worst.max((grads.weight[w] - (plus - minus) / (2.0 * h)).abs() / scale);
        }
        for i in 0..n {
            let mut plus_v = v.clone();
            plus_v[i] += h;
            let mut minus_v = v.clone();
            minus_v[i] -= h;
            let numeric =
                (dot(&layer.forward(&plus_v)?, &gout) - dot(&layer.forward(&minus_v)?, &gout))
                    / (2.0 * h);
            worst = worst.max((grads.input[i] - numeric).abs() / scale);
        }
        // Softmax cross-entropy.
        let logits: Vec<f64> = (0..n).map(|_| rng.next_range(-2.0, 2.0)).collect();
        let label = (trial % n as u64) as usize;
        let (_, grad) = nn::softmax_cross_entropy(&logits, label)?;
        let scale = max_abs(&grad).max(1e-12);
        for i in 0..n {
            let mut plus = logits.clone();
            plus[i] += h;
            let mut minus = logits.clone();
            minus[i] -= h;
            let numeric = (nn::softmax_cross_entropy(&plus, label)?.0
                - nn::softmax_cross_entropy(&minus, label)?.0)
                / (2.0 * h);
            worst = worst.max((grad[i] - numeric).abs() / scale);
        }
    }
    Ok(SuiteResult {
        name: "layer-gradients",
        worst,
        tolerance: 1e-5,
    })
}

fn pipeline_gradients() -> Result<SuiteResult> {
    let mut worst = 0.0f64;
    for case in grad_check_cases() {
        worst = worst.max(grad_check_case(&case)?);
    }
    Ok(SuiteResult {
        name: "pipeline-gradients",
        worst,
        tolerance: 1e-5,
    })
}

fn param_counts() -> Result<SuiteResult> {
    let full = full_bilinear_param_count(2048, 2048, 3000)?;
    let compact = mcb_param_count(16000, 3000)?;
    let worst = if full == 12_582_912_000 && compact == 48_000_000 {
        0.0
    } else {
        1.0
    };
    Ok(SuiteResult {
        name: "param-counts",
        worst,
        tolerance: 0.0,
    })
}
