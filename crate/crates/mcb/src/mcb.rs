//! The compact bilinear pooling operator: forward, backward, multi-input,
//! batched, plus the parameter-count calculators that motivate it.
//!
//! Forward pass: sketch each input to length d, transform every sketch,
//! multiply the spectra element-wise, and invert the transform. For two
//! inputs the output equals the count sketch of the flattened outer
//! product; the element-wise combination extends unchanged to three or
//! more inputs. The operator itself carries zero learned parameters.

use crate::error::{Error, Result};
use crate::fft::{real_part_checked, to_complex, Complex, FftPlan};
use crate::rng::child_seed;
use crate::sketch::CountSketchParams;
use crate::util::parallel_map;

/// A bundle of per-modality sketch params sharing one output dimension.
#[derive(Debug, Clone)]
pub struct McbOperator {
    d: usize,
    inputs: Vec<CountSketchParams>,
    seed: u64,
    plan: FftPlan,
}

/// Forward activations cached for the backward pass.
#[derive(Debug, Clone)]
pub struct McbForwardRecord {
    pub sketches: Vec<Vec<f64>>,
    pub spectra: Vec<Vec<Complex>>,
    pub output: Vec<f64>,
}

impl McbOperator {
    /// Builds an operator over `dims.len()` modalities. Modality `k` draws
    /// its sketch from the child seed `child_seed(seed, k)`.
    pub fn new(seed: u64, dims: &[usize], d: usize) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "operator needs at least 2 inputs, got {}",
                dims.len()
            )));
        }
        let inputs = dims
            .iter()
            .enumerate()
            .map(|(k, &n)| CountSketchParams::sample(child_seed(seed, k as u64), n, d))
            .collect::<Result<Vec<_>>>()?;
        Ok(McbOperator {
            d,
            inputs,
            seed,
            plan: FftPlan::new(d)?,
        })
    }

    /// Builds an operator from explicit sketch params (used by tests and
    /// by file loading); all params must share the same output dimension.
    pub fn from_params(seed: u64, inputs: Vec<CountSketchParams>) -> Result<Self> {
        if inputs.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "operator needs at least 2 inputs, got {}",
                inputs.len()
            )));
        }
        let d = inputs[0].output_dim();
        if inputs.iter().any(|p| p.output_dim() != d) {
            return Err(Error::InvalidArgument(
                "all sketch params must share the output dimension".into(),
            ));
        }
        Ok(McbOperator {
            d,
            inputs,
            seed,
            plan: FftPlan::new(d)?,
        })
    }

    pub fn output_dim(&self) -> usize {
        self.d
    }

    pub fn arity(&self) -> usize {
        self.inputs.len()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn params(&self, k: usize) -> &CountSketchParams {
        &self.inputs[k]
    }

    pub fn input_dims(&self) -> Vec<usize> {
        self.inputs.iter().map(|p| p.input_dim()).collect()
    }

    /// Pools one input tuple, keeping the intermediates needed by
    /// [`backward`](Self::backward).
    pub fn forward(&self, vs: &[&[f64]]) -> Result<McbForwardRecord> {
        if vs.len() != self.inputs.len() {
            return Err(Error::InvalidArgument(format!(
                "operator has {} inputs, got {}",
                self.inputs.len(),
                vs.len()
            )));
        }
        let mut sketches = Vec::with_capacity(vs.len());
        let mut spectra = Vec::with_capacity(vs.len());
        for (params, v) in self.inputs.iter().zip(vs) {
            let sketch = params.apply(v)?;
            let spectrum = self.plan.forward(&to_complex(&sketch))?;
            sketches.push(sketch);
            spectra.push(spectrum);
        }
        let mut product = spectra[0].clone();
        for spectrum in &spectra[1..] {
            for (p, s) in product.iter_mut().zip(spectrum) {
                *p = *p * *s;
            }
        }
        let pooled = self.plan.inverse(&product)?;
        let output = real_part_checked(&pooled, 1e-6, "compact bilinear forward")?;
        Ok(McbForwardRecord {
            sketches,
            spectra,
            output,
        })
    }

    /// Gradients of a scalar loss with respect to every input, given the
    /// gradient `g` with respect to the pooled output.
    ///
    /// For fixed other inputs the map from input j to the output is linear
    /// (sketch, transform, fixed spectral scaling, inverse transform), so
    /// each gradient is the adjoint chain: transform `g`, multiply by the
    /// conjugate of the product of the other spectra, invert, and push the
    /// real part through the sketch adjoint. The sketch params are fixed
    /// random projections and receive no gradient.
    pub fn backward(&self, record: &McbForwardRecord, g: &[f64]) -> Result<Vec<Vec<f64>>> {
        if g.len() != self.d {
            return Err(Error::InvalidArgument(format!(
                "gradient length {} does not match output dim {}",
                g.len(),
                self.d
            )));
        }
        if record.spectra.len() != self.inputs.len() {
            return Err(Error::InvalidArgument(
                "forward record does not match operator arity".into(),
            ));
        }
        let g_spectrum = self.plan.forward(&to_complex(g))?;
        let mut grads = Vec::with_capacity(self.inputs.len());
        for j in 0..self.inputs.len() {
            let mut scaled = g_spectrum.clone();
            for (l, spectrum) in record.spectra.iter().enumerate() {
                if l == j {
                    continue;
                }
                for (x, s) in scaled.iter_mut().zip(spectrum) {
                    *x = *x * s.conj();
                }
            }
            let back = self.plan.inverse(&scaled)?;
            let sketch_grad = real_part_checked(&back, 1e-6, "compact bilinear backward")?;
            grads.push(self.inputs[j].apply_adjoint(&sketch_grad)?);
        }
        Ok(grads)
    }

    /// True when every output bucket is reachable by some index tuple of
    /// the flattened outer product. Unreachable buckets are identically
    /// zero and carry only FFT rounding noise in the computed output.
    pub fn covers_all_outputs(&self) -> bool {
        let mut reachable = vec![false; self.d];
        for &b in self.inputs[0].h_one_based().iter() {
            reachable[b - 1] = true;
        }
        for params in &self.inputs[1..] {
            let mut next = vec![false; self.d];
            for (offset, hit) in reachable.iter().enumerate() {
                if !hit {
                    continue;
                }
                for &b in params.h_one_based().iter() {
                    next[(offset + b - 1) % self.d] = true;
                }
            }
            reachable = next;
        }
        reachable.iter().all(|&r| r)
    }

    /// Pools a batch of input tuples independently. The result is identical
    /// for any batch order and any thread count.
    pub fn forward_batch(&self, batch: &[Vec<Vec<f64>>]) -> Result<Vec<McbForwardRecord>> {
        let results = parallel_map(batch.iter().collect::<Vec<_>>(), |tuple| {
            let views: Vec<&[f64]> = tuple.iter().map(|v| v.as_slice()).collect();
            self.forward(&views)
        });
        results.into_iter().collect()
    }
}

/// Learned parameters of a classifier over the explicit outer product:
/// `n1 * n2 * outputs`, checked against 64-bit overflow.
pub fn full_bilinear_param_count(n1: u64, n2: u64, outputs: u64) -> Result<u64> {
    if n1 == 0 || n2 == 0 || outputs == 0 {
        return Err(Error::InvalidArgument(
            "parameter count factors must be positive".into(),
        ));
    }
    n1.checked_mul(n2)
        .and_then(|p| p.checked_mul(outputs))
        .ok_or_else(|| Error::InvalidArgument("parameter count overflows 64 bits".into()))
}

/// Learned parameters of a classifier over the pooled feature:
/// `d * outputs`. The pooling itself adds zero learned parameters.
pub fn mcb_param_count(d: u64, outputs: u64) -> Result<u64> {
    if d == 0 || outputs == 0 {
        return Err(Error::InvalidArgument(
            "parameter count factors must be positive".into(),
        ));
    }
    d.checked_mul(outputs)
        .ok_or_else(|| Error::InvalidArgument("parameter count overflows 64 bits".into()))
}
