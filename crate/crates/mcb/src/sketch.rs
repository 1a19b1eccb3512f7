//! Count sketch projection: parameter sampling, application, adjoint, and
//! the explicit outer-product sketch used as an equivalence oracle.
//!
//! A sketch maps v in R^n to y in R^d by accumulating `s[i] * v[i]` into
//! bucket `h[i]`. The hash `h` and sign `s` vectors are drawn once and
//! remain constant for every later invocation; they carry no learned
//! parameters.

use crate::error::{Error, Result};
use crate::rng::SplitMix64;

/// The random (h, s) pair defining one sketch projection.
///
/// Buckets are stored 0-based internally; the serialized form and
/// [`CountSketchParams::from_parts`] use 1-based buckets in `{1, ..., d}`.
#[derive(Debug, Clone, PartialEq)]
pub struct CountSketchParams {
    n: usize,
    d: usize,
    buckets: Vec<usize>,
    signs: Vec<f64>,
    seed: u64,
}

impl CountSketchParams {
    /// Draws h uniformly from `{1,...,d}^n` and s uniformly from `{-1,1}^n`
    /// using a splitmix64 stream seeded with `seed`. Draw order is fixed:
    /// for each index i, one draw for the bucket, then one for the sign.
    pub fn sample(seed: u64, n: usize, d: usize) -> Result<Self> {
        if n == 0 || d == 0 {
            return Err(Error::InvalidArgument(format!(
                "sketch dimensions must be positive, got n={n}, d={d}"
            )));
        }
        let mut rng = SplitMix64::new(seed);
        let mut buckets = Vec::with_capacity(n);
        let mut signs = Vec::with_capacity(n);
        for _ in 0..n {
            buckets.push(rng.next_below(d as u64) as usize);
            signs.push(rng.next_sign());
        }
        Ok(CountSketchParams {
            n,
            d,
            buckets,
            signs,
            seed,
        })
    }

    /// Builds params from explicit 1-based buckets and +/-1 signs.
    pub fn from_parts(d: usize, h_one_based: Vec<usize>, s: Vec<i8>, seed: u64) -> Result<Self> {
        if d == 0 || h_one_based.is_empty() {
            return Err(Error::InvalidArgument(
                "sketch dimensions must be positive".into(),
            ));
        }
        if h_one_based.len() != s.len() {
            return Err(Error::InvalidArgument(format!(
                "h and s lengths differ: {} vs {}",
                h_one_based.len(),
                s.len()
            )));
        }
        let mut buckets = Vec::with_capacity(h_one_based.len());
        for &h in &h_one_based {
            if h < 1 || h > d {
                return Err(Error::InvalidArgument(format!(
                    "bucket {h} outside 1..={d}"
                )));
            }
            buckets.push(h - 1);
        }
        let mut signs = Vec::with_capacity(s.len());
        for &x in &s {
            if x != 1 && x != -1 {
                return Err(Error::InvalidArgument(format!("sign {x} not in {{-1,1}}")));
            }
            signs.push(x as f64);
        }
        Ok(CountSketchParams {
            n: buckets.len(),
            d,
            buckets,
            signs,
            seed,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.n
    }

    pub fn output_dim(&self) -> usize {
        self.d
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// 1-based bucket indices, as serialized.
    pub fn h_one_based(&self) -> Vec<usize> {
        self.buckets.iter().map(|&b| b + 1).collect()
    }

    /// Signs as +/-1 integers, as serialized.
    pub fn signs_i8(&self) -> Vec<i8> {
        self.signs.iter().map(|&s| s as i8).collect()
    }

    /// Sketches `v` into a fresh zero vector of length d:
    /// `y[h[i]] += s[i] * v[i]`.
    pub fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.n {
            return Err(Error::InvalidArgument(format!(
                "sketch expects input length {}, got {}",
                self.n,
                v.len()
            )));
        }
        let mut y = vec![0.0; self.d];
        for i in 0..self.n {
            y[self.buckets[i]] += self.signs[i] * v[i];
        }
        Ok(y)
    }

    /// Exact adjoint of [`apply`](Self::apply): `r[i] = s[i] * g[h[i]]`,
    /// so `<apply(v), g> == <v, apply_adjoint(g)>` for all v, g.
    pub fn apply_adjoint(&self, g: &[f64]) -> Result<Vec<f64>> {
        if g.len() != self.d {
            return Err(Error::InvalidArgument(format!(
                "adjoint expects input length {}, got {}",
                self.d,
                g.len()
            )));
        }
        Ok((0..self.n)
            .map(|i| self.signs[i] * g[self.buckets[i]])
            .collect())
    }

    /// Combined params over the flattened outer-product index space
    /// (row-major: `(i, j) -> i * n2 + j`):
    /// `h'[(i,j)] = ((h1[i]-1 + h2[j]-1) mod d) + 1`, `s'[(i,j)] = s1[i]*s2[j]`.
    ///
    /// Applying the result to `vec(x (x) q)` equals the circular convolution
    /// of the two individual sketches, which is the identity the FFT pooling
    /// path relies on. Chaining the combination extends it to three or more
    /// inputs. The stored seed is provenance only (a mix of both seeds).
    pub fn outer_product_params(&self, other: &CountSketchParams) -> Result<CountSketchParams> {
        if self.d != other.d {
            return Err(Error::InvalidArgument(format!(
                "output dims differ: {} vs {}",
                self.d, other.d
            )));
        }
        let n = self.n * other.n;
        let mut buckets = Vec::with_capacity(n);
        let mut signs = Vec::with_capacity(n);
        for i in 0..self.n {
            for j in 0..other.n {
                buckets.push((self.buckets[i] + other.buckets[j]) % self.d);
                signs.push(self.signs[i] * other.signs[j]);
            }
        }
        Ok(CountSketchParams {
            n,
            d: self.d,
            buckets,
            signs,
            seed: crate::rng::child_seed(self.seed, other.seed),
        })
    }
}

/// Row-major flattened outer product `vec(x q^T)`.
pub fn outer_product_vec(x: &[f64], q: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(x.len() * q.len());
    for &xi in x {
        for &qj in q {
            out.push(xi * qj);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fft::circular_convolve;
    use crate::util::{dot, max_abs_diff};

    fn identity_params(n: usize) -> CountSketchParams {
        CountSketchParams::from_parts(n, (1..=n).collect(), vec![1; n], 0).unwrap()
    }

    #[test]
    fn sampling_is_deterministic() {
        let a = CountSketchParams::sample(7, 5, 3).unwrap();
        let b = CountSketchParams::sample(7, 5, 3).unwrap();
        assert_eq!(a, b);
        let c = CountSketchParams::sample(8, 5, 3).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn sampled_values_are_in_range() {
        let p = CountSketchParams::sample(21, 1000, 17).unwrap();
        for h in p.h_one_based() {
            assert!((1..=17).contains(&h));
        }
        for s in p.signs_i8() {
            assert!(s == 1 || s == -1);
        }
    }

    #[test]
    fn bucket_distribution_is_uniform_within_three_sigma() {
        // 1e5 draws over d=4 buckets; each frequency should land within
        // 3 sigma of 0.25, sigma = sqrt(p(1-p)/N).
        let n = 100_000;
        let p = CountSketchParams::sample(2024, n, 4).unwrap();
        let mut counts = [0usize; 4];
        for h in &p.buckets {
            counts[*h] += 1;
        }
        let sigma = (0.25 * 0.75 / n as f64).sqrt();
        for c in counts {
            let freq = c as f64 / n as f64;
            assert!(
                (freq - 0.25).abs() < 3.0 * sigma,
                "bucket frequency {freq} outside 3 sigma"
            );
        }
    }

    #[test]
    fn zero_dimensions_rejected() {
        assert!(CountSketchParams::sample(1, 0, 3).is_err());
        assert!(CountSketchParams::sample(1, 3, 0).is_err());
    }

    #[test]
    fn identity_sketch_is_identity() {
        let p = identity_params(4);
        let v = [1.5, -2.0, 0.25, 9.0];
        assert_eq!(p.apply(&v).unwrap(), v.to_vec());
        assert_eq!(p.apply_adjoint(&v).unwrap(), v.to_vec());
    }

    #[test]
    fn hand_worked_apply() {
        // h=[1,1,2], s=[1,-1,1], v=[2,3,5]: bucket 1 gets 2-3=-1, bucket 2 gets 5.
        let p = CountSketchParams::from_parts(2, vec![1, 1, 2], vec![1, -1, 1], 0).unwrap();
        assert_eq!(p.apply(&[2.0, 3.0, 5.0]).unwrap(), vec![-1.0, 5.0]);
    }

    #[test]
    fn hand_worked_adjoint() {
        let p = CountSketchParams::from_parts(2, vec![1, 1, 2], vec![1, -1, 1], 0).unwrap();
        assert_eq!(
            p.apply_adjoint(&[10.0, 20.0]).unwrap(),
            vec![10.0, -10.0, 20.0]
        );
        assert_eq!(p.apply_adjoint(&[0.0, 0.0]).unwrap(), vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn apply_is_linear() {
        let p = CountSketchParams::sample(3, 20, 7).unwrap();
        let mut rng = crate::rng::SplitMix64::new(5);
        let v: Vec<f64> = (0..20).map(|_| rng.next_range(-1.0, 1.0)).collect();
        let doubled: Vec<f64> = v.iter().map(|x| 2.0 * x).collect();
        let y1 = p.apply(&v).unwrap();
        let y2 = p.apply(&doubled).unwrap();
        let y1_scaled: Vec<f64> = y1.iter().map(|x| 2.0 * x).collect();
        assert!(max_abs_diff(&y2, &y1_scaled) < 1e-12);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let p = CountSketchParams::sample(3, 4, 5).unwrap();
        assert!(p.apply(&[1.0; 3]).is_err());
        assert!(p.apply_adjoint(&[1.0; 4]).is_err());
    }

    #[test]
    fn adjoint_identity_on_random_triples() {
        let mut rng = crate::rng::SplitMix64::new(99);
        let mut worst = 0.0f64;
        for trial in 0..1000 {
            let n = 1 + (trial % 24);
            let d = 1 + (trial % 9);
            let p = CountSketchParams::sample(trial as u64, n, d).unwrap();
            let v: Vec<f64> = (0..n).map(|_| rng.next_range(-1.0, 1.0)).collect();
            let g: Vec<f64> = (0..d).map(|_| rng.next_range(-1.0, 1.0)).collect();
            let sketched = p.apply(&v).unwrap();
            let lhs = dot(&sketched, &g);
            let rhs = dot(&v, &p.apply_adjoint(&g).unwrap());
            // Relative to the natural scale of the inner product, not the
            // possibly cancelled value.
            let scale = (crate::util::l2_norm(&sketched) * crate::util::l2_norm(&g)).max(1e-30);
            worst = worst.max((lhs - rhs).abs() / scale);
        }
        assert!(worst < 1e-12, "worst adjoint relative error {worst}");
    }

    #[test]
    fn inner_product_estimate_is_unbiased() {
        // Mean over independently seeded sketches of <apply(u), apply(v)>
        // approaches <u, v>; assert within 4 standard errors.
        let mut rng = crate::rng::SplitMix64::new(2718);
        let (n, d, m) = (16usize, 64usize, 2000usize);
        let u = rng.unit_vec(n);
        let v = rng.unit_vec(n);
        let target = dot(&u, &v);
        let estimates: Vec<f64> = (0..m)
            .map(|i| {
                let p = CountSketchParams::sample(10_000 + i as u64, n, d).unwrap();
                dot(&p.apply(&u).unwrap(), &p.apply(&v).unwrap())
            })
            .collect();
        let mean = estimates.iter().sum::<f64>() / m as f64;
        let var = estimates.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>() / (m - 1) as f64;
        let stderr = (var / m as f64).sqrt();
        assert!(
            (mean - target).abs() < 4.0 * stderr,
            "mean {mean} vs target {target}, stderr {stderr}"
        );
    }

    #[test]
    fn sketch_touches_at_most_min_n_d_outputs() {
        let p = CountSketchParams::sample(4, 6, 50).unwrap();
        let y = p.apply(&[1.0, 1.0, 1.0, 1.0, 1.0, 1.0]).unwrap();
        let nonzeros = y.iter().filter(|x| **x != 0.0).count();
        assert!(nonzeros <= 6);
    }

    #[test]
    fn single_element_outer_product() {
        let p1 = CountSketchParams::from_parts(1, vec![1], vec![1], 0).unwrap();
        let p2 = CountSketchParams::from_parts(1, vec![1], vec![-1], 0).unwrap();
        let combined = p1.outer_product_params(&p2).unwrap();
        let sketched = combined.apply(&outer_product_vec(&[3.0], &[4.0])).unwrap();
        assert_eq!(sketched, vec![-12.0]);
    }

    #[test]
    fn outer_product_signs_stay_unit() {
        let p1 = CountSketchParams::sample(1, 5, 8).unwrap();
        let p2 = CountSketchParams::sample(2, 7, 8).unwrap();
        let combined = p1.outer_product_params(&p2).unwrap();
        for s in combined.signs_i8() {
            assert!(s == 1 || s == -1);
        }
    }

    #[test]
    fn outer_product_mismatched_d_rejected() {
        let p1 = CountSketchParams::sample(1, 4, 8).unwrap();
        let p2 = CountSketchParams::sample(2, 4, 9).unwrap();
        assert!(p1.outer_product_params(&p2).is_err());
    }

    #[test]
    fn sketch_of_outer_product_equals_convolution_of_sketches() {
        let mut rng = crate::rng::SplitMix64::new(31);
        let mut worst = 0.0f64;
        for trial in 0..50 {
            let (n1, n2, d) = (4, 3, 8);
            let p1 = CountSketchParams::sample(100 + trial, n1, d).unwrap();
            let p2 = CountSketchParams::sample(200 + trial, n2, d).unwrap();
            let x: Vec<f64> = (0..n1).map(|_| rng.next_range(-1.0, 1.0)).collect();
            let q: Vec<f64> = (0..n2).map(|_| rng.next_range(-1.0, 1.0)).collect();
            let direct = p1
                .outer_product_params(&p2)
                .unwrap()
                .apply(&outer_product_vec(&x, &q))
                .unwrap();
            let convolved =
                circular_convolve(&p1.apply(&x).unwrap(), &p2.apply(&q).unwrap()).unwrap();
            worst = worst.max(max_abs_diff(&direct, &convolved));
        }
        assert!(worst < 1e-9, "worst deviation {worst}");
    }

    #[test]
    fn outer_product_identity_up_to_32x32() {
        let mut rng = crate::rng::SplitMix64::new(37);
        let mut worst = 0.0f64;
        for (n1, n2, d) in [(32, 32, 64), (31, 17, 40), (8, 32, 64), (32, 8, 13)] {
            let p1 = CountSketchParams::sample(n1 as u64, n1, d).unwrap();
            let p2 = CountSketchParams::sample(1000 + n2 as u64, n2, d).unwrap();
            let x: Vec<f64> = (0..n1).map(|_| rng.next_range(-1.0, 1.0)).collect();
            let q: Vec<f64> = (0..n2).map(|_| rng.next_range(-1.0, 1.0)).collect();
            let direct = p1
                .outer_product_params(&p2)
                .unwrap()
                .apply(&outer_product_vec(&x, &q))
                .unwrap();
            let convolved =
                circular_convolve(&p1.apply(&x).unwrap(), &p2.apply(&q).unwrap()).unwrap();
            worst = worst.max(max_abs_diff(&direct, &convolved));
        }
        assert!(worst < 1e-9, "worst deviation {worst}");
    }

    #[test]
    fn from_parts_validates() {
        assert!(CountSketchParams::from_parts(2, vec![3], vec![1], 0).is_err());
        assert!(CountSketchParams::from_parts(2, vec![1], vec![2], 0).is_err());
        assert!(CountSketchParams::from_parts(2, vec![1, 2], vec![1], 0).is_err());
    }
}
