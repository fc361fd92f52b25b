//! Radial kernels used by the deformation model.
//!
//! The vector-field kernel is the Matérn-type profile `Γ(r) = P_c(r/a) e^{-r/a}`
//! where `P_c` is the reverse Bessel polynomial of degree `c` normalised to
//! `P_c(0) = 1`. It acts as a scalar multiple of the identity on `ℝ^d`.
//! The Gaussian kernel is the spatial part of the varifold inner product.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest supported smoothness index.
pub const MAX_SMOOTHNESS: u32 = 4;

const COEFFS: usize = MAX_SMOOTHNESS as usize + 1;

/// Below this many row/column pairs the Gram product runs serially.
const PAR_THRESHOLD: usize = 4096;

/// Coefficients of the normalised reverse Bessel polynomial of degree `c`,
/// constant term first.
pub fn reverse_bessel_coefficients(c: u32) -> Vec<f64> {
    // θ_n = (2n - 1) θ_{n-1} + x² θ_{n-2}, θ_0 = 1, θ_1 = x + 1
    let mut prev: Vec<f64> = vec![1.0];
    if c == 0 {
        return prev;
    }
    let mut cur: Vec<f64> = vec![1.0, 1.0];
    for n in 2..=c as usize {
        let mut next = vec![0.0; n + 1];
        for (j, v) in cur.iter().enumerate() {
            next[j] += (2 * n - 1) as f64 * v;
        }
        for (j, v) in prev.iter().enumerate() {
            next[j + 2] += v;
        }
        prev = std::mem::replace(&mut cur, next);
    }
    let c0 = cur[0];
    cur.iter().map(|v| v / c0).collect()
}

fn horner(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
}

/// Matérn-family kernel `Γ(|x - y| / a)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "KernelParams", into = "KernelParams")]
pub struct KernelSpec {
    scale: f64,
    smoothness: u32,
    poly: [f64; COEFFS],
    /// `(P - P') / s`, so that `Γ'(s) = -s · slope(s)`; unused when `smoothness == 0`.
    slope: [f64; COEFFS],
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
struct KernelParams {
    scale: f64,
    smoothness: u32,
}

impl TryFrom<KernelParams> for KernelSpec {
    type Error = Error;
    fn try_from(p: KernelParams) -> Result<Self> {
        KernelSpec::new(p.scale, p.smoothness)
    }
}

impl From<KernelSpec> for KernelParams {
    fn from(k: KernelSpec) -> Self {
        KernelParams { scale: k.scale, smoothness: k.smoothness }
    }
}

impl KernelSpec {
    pub fn new(scale: f64, smoothness: u32) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::InvalidParameter(format!("kernel scale must be positive, got {scale}")));
        }
        if smoothness > MAX_SMOOTHNESS {
            return Err(Error::InvalidParameter(format!(
                "kernel smoothness must be in 0..={MAX_SMOOTHNESS}, got {smoothness}"
            )));
        }
        let p = reverse_bessel_coefficients(smoothness);
        let mut poly = [0.0; COEFFS];
        poly[..p.len()].copy_from_slice(&p);
        let mut slope = [0.0; COEFFS];
        if smoothness > 0 {
            // P - P' has a vanishing constant term; divide it by s.
            for j in 1..p.len() {
                let deriv = if j + 1 < p.len() { (j + 1) as f64 * p[j + 1] } else { 0.0 };
                slope[j - 1] = p[j] - deriv;
            }
        }
        Ok(Self { scale, smoothness, poly, slope })
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn smoothness(&self) -> u32 {
        self.smoothness
    }

    fn degree(&self) -> usize {
        self.smoothness as usize
    }

    /// Profile in normalised distance `s = r / a`.
    #[inline]
    pub fn profile_normalized(&self, s: f64) -> f64 {
        horner(&self.poly[..=self.degree()], s) * (-s).exp()
    }

    /// `-Γ'(s) / s` in normalised distance. Zero at `s = 0` for `c = 0`,
    /// where the profile has a corner.
    #[inline]
    fn slope_normalized(&self, s: f64) -> f64 {
        if self.smoothness == 0 {
            if s > 0.0 {
                (-s).exp() / s
            } else {
                0.0
            }
        } else {
            horner(&self.slope[..self.degree()], s) * (-s).exp()
        }
    }

    /// Value and gradient factor for a squared distance: returns `(Γ, g)` with
    /// `∇_x Γ(|x - y|/a) = -g · (x - y)`.
    #[inline]
    pub(crate) fn value_and_slope(&self, r2: f64) -> (f64, f64) {
        let s = r2.sqrt() / self.scale;
        let e = (-s).exp();
        let val = horner(&self.poly[..=self.degree()], s) * e;
        let g = self.slope_normalized(s) / (self.scale * self.scale);
        (val, g)
    }
}

/// `Γ(r / a)` for a distance `r ≥ 0`.
pub fn kernel_profile(r: f64, spec: &KernelSpec) -> f64 {
    spec.profile_normalized(r / spec.scale)
}

/// Isotropic Gaussian kernel `exp(-|x - y|² / 2τ²)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianKernelSpec {
    pub width: f64,
}

impl GaussianKernelSpec {
    pub fn new(width: f64) -> Result<Self> {
        if !(width > 0.0 && width.is_finite()) {
            return Err(Error::InvalidParameter(format!("gaussian width must be positive, got {width}")));
        }
        Ok(Self { width })
    }

    #[inline]
    pub(crate) fn eval_sq(&self, r2: f64) -> f64 {
        (-r2 / (2.0 * self.width * self.width)).exp()
    }
}

pub fn gaussian_eval(x: &[f64], y: &[f64], spec: &GaussianKernelSpec) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch { expected: x.len(), found: y.len() });
    }
    Ok(spec.eval_sq(sq_dist(x, y)))
}

#[inline]
pub(crate) fn sq_dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

fn check_points(coords: &[f64], dim: usize) -> Result<usize> {
    if dim == 0 || coords.len() % dim != 0 {
        return Err(Error::DimensionMismatch { expected: dim, found: coords.len() % dim.max(1) });
    }
    Ok(coords.len() / dim)
}

/// Applies the Gram matrix between two flattened point sets of dimension
/// `dim` to per-column momenta: `out_i = Σ_j Γ(|x_i - y_j| / a) α_j`.
pub fn gram_apply(rows: &[f64], cols: &[f64], momenta: &[f64], dim: usize, spec: &KernelSpec) -> Result<Vec<f64>> {
    check_points(rows, dim)?;
    let m = check_points(cols, dim)?;
    if momenta.len() != cols.len() {
        return Err(Error::LengthMismatch { expected: m * dim, found: momenta.len() });
    }
    Ok(gram_apply_unchecked(rows, cols, momenta, dim, spec))
}

pub(crate) fn gram_apply_unchecked(rows: &[f64], cols: &[f64], momenta: &[f64], dim: usize, spec: &KernelSpec) -> Vec<f64> {
    let n = rows.len() / dim;
    let m = cols.len() / dim;
    let mut out = vec![0.0; rows.len()];
    let row_kernel = |(x, o): (&[f64], &mut [f64])| {
        for (y, a) in cols.chunks_exact(dim).zip(momenta.chunks_exact(dim)) {
            let k = spec.profile_normalized(sq_dist(x, y).sqrt() / spec.scale);
            for (oc, ac) in o.iter_mut().zip(a) {
                *oc += k * ac;
            }
        }
    };
    if n * m >= PAR_THRESHOLD {
        rows.par_chunks_exact(dim).zip(out.par_chunks_exact_mut(dim)).for_each(row_kernel);
    } else {
        rows.chunks_exact(dim).zip(out.chunks_exact_mut(dim)).for_each(row_kernel);
    }
    out
}

/// Gradient with respect to the (shared) point set `q` of `wᵀ K(q) α`, where
/// `K(q)` is the square Gram matrix of `q` with itself and `w`, `α` are held
/// fixed.
pub(crate) fn gram_bilinear_grad(q: &[f64], w: &[f64], alpha: &[f64], dim: usize, spec: &KernelSpec) -> Vec<f64> {
    let n = q.len() / dim;
    let mut out = vec![0.0; q.len()];
    let row = |i: usize, o: &mut [f64]| {
        let qi = &q[i * dim..(i + 1) * dim];
        let wi = &w[i * dim..(i + 1) * dim];
        let ai = &alpha[i * dim..(i + 1) * dim];
        for j in 0..n {
            if j == i {
                continue;
            }
            let qj = &q[j * dim..(j + 1) * dim];
            let wj = &w[j * dim..(j + 1) * dim];
            let aj = &alpha[j * dim..(j + 1) * dim];
            let (_, g) = spec.value_and_slope(sq_dist(qi, qj));
            let coupling: f64 = dot(wi, aj) + dot(wj, ai);
            let f = -g * coupling;
            for c in 0..dim {
                o[c] += f * (qi[c] - qj[c]);
            }
        }
    };
    if n * n >= PAR_THRESHOLD {
        out.par_chunks_exact_mut(dim).enumerate().for_each(|(i, o)| row(i, o));
    } else {
        out.chunks_exact_mut(dim).enumerate().for_each(|(i, o)| row(i, o));
    }
    out
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
