//! Complex FFT, inverse FFT, and real circular convolution.
//!
//! Power-of-two lengths run through an iterative radix-2 Cooley-Tukey
//! transform; every other length runs through Bluestein's chirp-z
//! algorithm on a padded power-of-two transform, so any output dimension
//! is supported at O(n log n) cost. The forward transform is unscaled,
//! the inverse carries the 1/n factor.

use crate::error::{invalid, Error, Result};

/// Double-precision complex scalar.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Complex {
    pub re: f64,
    pub im: f64,
}

impl Complex {
    pub const ZERO: Complex = Complex { re: 0.0, im: 0.0 };

    pub fn new(re: f64, im: f64) -> Self {
        Complex { re, im }
    }

    pub fn from_re(re: f64) -> Self {
        Complex { re, im: 0.0 }
    }

    /// e^{i theta}
    pub fn cis(theta: f64) -> Self {
        Complex {
            re: theta.cos(),
            im: theta.sin(),
        }
    }

    pub fn conj(self) -> Self {
        Complex {
            re: self.re,
            im: -self.im,
        }
    }

    pub fn scale(self, s: f64) -> Self {
        Complex {
            re: self.re * s,
            im: self.im * s,
        }
    }

    pub fn norm_sq(self) -> f64 {
        self.re * self.re + self.im * self.im
    }
}

impl std::ops::Add for Complex {
    type Output = Complex;
    fn add(self, rhs: Complex) -> Complex {
        Complex::new(self.re + rhs.re, self.im + rhs.im)
    }
}

impl std::ops::Sub for Complex {
    type Output = Complex;
    fn sub(self, rhs: Complex) -> Complex {
        Complex::new(self.re - rhs.re, self.im - rhs.im)
    }
}

impl std::ops::Mul for Complex {
    type Output = Complex;
    fn mul(self, rhs: Complex) -> Complex {
        Complex::new(
            self.re * rhs.re - self.im * rhs.im,
            self.re * rhs.im + self.im * rhs.re,
        )
    }
}

/// Precomputed transform of one fixed length. Tables are immutable after
/// construction, so a plan can be shared across threads.
#[derive(Debug, Clone)]
pub struct FftPlan {
    n: usize,
    kind: PlanKind,
}

#[derive(Debug, Clone)]
enum PlanKind {
    Radix2 {
        /// roots[k] = e^{-2 pi i k / n} for k < n/2
        roots: Vec<Complex>,
    },
    Bluestein {
        /// chirp[j] = e^{-pi i j^2 / n}
        chirp: Vec<Complex>,
        /// forward transform (length m) of the padded conjugate chirp
        kernel_spectrum: Vec<Complex>,
        m: usize,
        m_roots: Vec<Complex>,
    },
}

impl FftPlan {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return invalid("fft length must be >= 1");
        }
        if n.is_power_of_two() {
            return Ok(FftPlan {
                n,
                kind: PlanKind::Radix2 {
                    roots: forward_roots(n),
                },
            });
        }
        // Chirp angles reduced mod 2n before touching floating point, so
        // large j^2 does not lose precision.
        let two_n = 2 * n as u64;
        let chirp: Vec<Complex> = (0..n)
            .map(|j| {
                let t = ((j as u64).wrapping_mul(j as u64)) % two_n;
                Complex::cis(-std::f64::consts::PI * t as f64 / n as f64)
            })
            .collect();
        let m = (2 * n - 1).next_power_of_two();
        let m_roots = forward_roots(m);
        let mut kernel = vec![Complex::ZERO; m];
        kernel[0] = Complex::new(1.0, 0.0);
        for j in 1..n {
            let b = chirp[j].conj();
            kernel[j] = b;
            kernel[m - j] = b;
        }
        radix2_in_place(&mut kernel, &m_roots);
        Ok(FftPlan {
            n,
            kind: PlanKind::Bluestein {
                chirp,
                kernel_spectrum: kernel,
                m,
                m_roots,
            },
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Discrete Fourier transform: X[k] = sum_j v[j] e^{-2 pi i jk / n}.
    pub fn forward(&self, v: &[Complex]) -> Result<Vec<Complex>> {
        if v.len() != self.n {
            return Err(Error::InvalidArgument(format!(
                "fft plan expects length {}, got {}",
                self.n,
                v.len()
            )));
        }
        match &self.kind {
            PlanKind::Radix2 { roots } => {
                let mut buf = v.to_vec();
                radix2_in_place(&mut buf, roots);
                Ok(buf)
            }
            PlanKind::Bluestein {
                chirp,
                kernel_spectrum,
                m,
                m_roots,
            } => {
                let mut buf = vec![Complex::ZERO; *m];
                for j in 0..self.n {
                    buf[j] = v[j] * chirp[j];
                }
                radix2_in_place(&mut buf, m_roots);
                for (x, k) in buf.iter_mut().zip(kernel_spectrum) {
                    *x = *x * *k;
                }
                radix2_inverse_in_place(&mut buf, m_roots);
                Ok((0..self.n).map(|k| chirp[k] * buf[k]).collect())
            }
        }
    }

    /// Inverse transform with 1/n scaling; `inverse(forward(v)) == v` up to
    /// rounding.
    pub fn inverse(&self, v: &[Complex]) -> Result<Vec<Complex>> {
        let conj: Vec<Complex> = v.iter().map(|z| z.conj()).collect();
        let mut out = self.forward(&conj)?;
        let inv_n = 1.0 / self.n as f64;
        for z in &mut out {
            *z = z.conj().scale(inv_n);
        }
        Ok(out)
    }
}

/// e^{-2 pi i k / n} for k < n/2.
fn forward_roots(n: usize) -> Vec<Complex> {
    (0..n / 2)
        .map(|k| Complex::cis(-2.0 * std::f64::consts::PI * k as f64 / n as f64))
        .collect()
}

fn radix2_in_place(buf: &mut [Complex], roots: &[Complex]) {
    let n = buf.len();
    debug_assert!(n.is_power_of_two());
    // Bit-reversal permutation.
    let mut j = 0;
    for i in 1..n {
        let mut bit = n >> 1;
        while j & bit != 0 {
            j ^= bit;
            bit >>= 1;
        }
        j ^= bit;
        if i < j {
            buf.swap(i, j);
        }
    }
    let mut len = 2;
    while len <= n {
        let half = len / 2;
        let stride = n / len;
        for start in (0..n).step_by(len) {
            for k in 0..half {
                let w = roots[k * stride];
                let u = buf[start + k];
                let t = w * buf[start + k + half];
                buf[start + k] = u + t;
                buf[start + k + half] = u - t;
            }
        }
        len *= 2;
    }
}

fn radix2_inverse_in_place(buf: &mut [Complex], roots: &[Complex]) {
    for z in buf.iter_mut() {
        *z = z.conj();
    }
    radix2_in_place(buf, roots);
    let inv_n = 1.0 / buf.len() as f64;
    for z in buf.iter_mut() {
        *z = z.conj().scale(inv_n);
    }
}

/// One-shot forward transform.
pub fn fft_forward(v: &[Complex]) -> Result<Vec<Complex>> {
    FftPlan::new(v.len())?.forward(v)
}

/// One-shot inverse transform.
pub fn fft_inverse(v: &[Complex]) -> Result<Vec<Complex>> {
    FftPlan::new(v.len())?.inverse(v)
}

pub fn to_complex(v: &[f64]) -> Vec<Complex> {
    v.iter().map(|&x| Complex::from_re(x)).collect()
}

/// Takes the real part after verifying the imaginary residue is below
/// `rel_tol` times the L2 norm of the real part.
pub fn real_part_checked(v: &[Complex], rel_tol: f64, context: &str) -> Result<Vec<f64>> {
    let re: Vec<f64> = v.iter().map(|z| z.re).collect();
    let norm = crate::util::l2_norm(&re);
    let residue = v.iter().fold(0.0f64, |acc, z| acc.max(z.im.abs()));
    if residue > rel_tol * norm.max(f64::MIN_POSITIVE) {
        return Err(Error::Numerical(format!(
            "{context}: imaginary residue {residue:.3e} exceeds {rel_tol:.1e} * ||c|| = {:.3e}",
            rel_tol * norm
        )));
    }
    Ok(re)
}

/// Circular convolution c[k] = sum_j a[j] b[(k - j) mod n], computed in the
/// frequency domain. Inputs must have equal nonzero length.
pub fn circular_convolve(a: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    if a.len() != b.len() {
        return Err(Error::InvalidArgument(format!(
            "circular_convolve length mismatch: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    let plan = FftPlan::new(a.len())?;
    let fa = plan.forward(&to_complex(a))?;
    let fb = plan.forward(&to_complex(b))?;
    let prod: Vec<Complex> = fa.iter().zip(&fb).map(|(x, y)| *x * *y).collect();
    let c = plan.inverse(&prod)?;
    real_part_checked(&c, 1e-6, "circular_convolve")
}
