//! Deterministic pseudo-randomness.
//!
//! Every random draw in the crate goes through [`SplitMix64`], a fixed,
//! named, seedable 64-bit generator (Steele, Lea & Flood's `splitmix64`
//! finalizer). The generator is pinned here rather than taken from an
//! external crate so that sketch parameters, datasets, and weight
//! initializations reproduce bit-exactly across rebuilds and can be
//! re-derived in any language from the update rule alone.
//!
//! Stream splitting: a parent seed spawns independent child streams via
//! [`child_seed`]; child `k` is `mix(seed + (k + 1) * GAMMA)` where `GAMMA`
//! is the splitmix increment. Modality `k` of a pooling operator, sample
//! `i` of a dataset, and layer `t` of a model each get their own child.

const GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// `splitmix64` output finalizer.
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Child seed for stream `index` under parent `seed`.
pub fn child_seed(seed: u64, index: u64) -> u64 {
    mix(seed.wrapping_add(index.wrapping_add(1).wrapping_mul(GAMMA)))
}

/// The splitmix64 generator: state advances by `GAMMA`, output is `mix(state)`.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        SplitMix64 { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GAMMA);
        mix(self.state)
    }

    /// Uniform integer in `[0, bound)` via the multiply-shift reduction.
    /// Bias is of order `bound / 2^64`, far below any tolerance used here.
    pub fn next_below(&mut self, bound: u64) -> u64 {
        debug_assert!(bound > 0);
        ((self.next_u64() as u128 * bound as u128) >> 64) as u64
    }

    /// Uniform f64 in `[0, 1)` with 53 random bits.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// A random sign, -1.0 or +1.0.
    pub fn next_sign(&mut self) -> f64 {
        if self.next_u64() & 1 == 0 {
            1.0
        } else {
            -1.0
        }
    }

    /// Standard normal deviate (Box-Muller; one fresh pair per call, the
    /// second value is discarded to keep the draw count per sample fixed).
    pub fn next_normal(&mut self) -> f64 {
        // u in (0,1] so the log is finite.
        let u = 1.0 - self.next_f64();
        let v = self.next_f64();
        (-2.0 * u.ln()).sqrt() * (2.0 * std::f64::consts::PI * v).cos()
    }

    /// Uniform f64 in `[lo, hi)`.
    pub fn next_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Vector of iid standard normals.
    pub fn normal_vec(&mut self, len: usize) -> Vec<f64> {
        (0..len).map(|_| self.next_normal()).collect()
    }

    /// Random point on the unit sphere in `len` dimensions.
    pub fn unit_vec(&mut self, len: usize) -> Vec<f64> {
        let mut v = self.normal_vec(len);
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            for x in &mut v {
                *x /= norm;
            }
        } else {
            // Degenerate draw has probability ~0; fall back to a basis vector.
            v = vec![0.0; len];
            v[0] = 1.0;
        }
        v
    }

    /// Fisher-Yates shuffle of `indices`.
    pub fn shuffle(&mut self, indices: &mut [usize]) {
        for i in (1..indices.len()).rev() {
            let j = self.next_below(i as u64 + 1) as usize;
            indices.swap(i, j);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_stream() {
        let mut a = SplitMix64::new(42);
        let mut b = SplitMix64::new(42);
        for _ in 0..100 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn child_seeds_differ_per_index() {
        let s0 = child_seed(7, 0);
        let s1 = child_seed(7, 1);
        let s2 = child_seed(8, 0);
        assert_ne!(s0, s1);
        assert_ne!(s0, s2);
    }

    #[test]
    fn f64_in_unit_interval() {
        let mut rng = SplitMix64::new(1);
        for _ in 0..1000 {
            let x = rng.next_f64();
            assert!((0.0..1.0).contains(&x));
        }
    }

    #[test]
    fn unit_vec_has_unit_norm() {
        let mut rng = SplitMix64::new(3);
        for len in [1, 2, 16, 100] {
            let v = rng.unit_vec(len);
            let norm: f64 = v.iter().map(|x| x * x).sum::<f64>();
            assert!((norm - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn normal_moments_are_plausible() {
        let mut rng = SplitMix64::new(11);
        let n = 200_000;
        let xs: Vec<f64> = (0..n).map(|_| rng.next_normal()).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64;
        assert!(mean.abs() < 0.01, "mean {mean}");
        assert!((var - 1.0).abs() < 0.02, "var {var}");
    }
}
