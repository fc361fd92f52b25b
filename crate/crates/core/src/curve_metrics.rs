//! Intrinsic H¹-type seminorms on vector fields along polygonal curves.
//!
//! With per-edge arc-length derivatives `∂_s h = Δh_e / l_e` and integrals
//! replaced by edge-length-weighted sums, the three kinds are
//!
//! ```text
//! h1_general:             Σ_e |Δh_e|²/l_e + α Σ_e l_e (|h_i|² + |h_j|²)/2
//! h1_rot_invariant:       A - B²/ℓ
//! h1_rot_scale_invariant: A/ℓ - (C/ℓ)² - (B/ℓ)²
//! ```
//!
//! where `A = Σ_e |Δh_e|²/l_e`, `B = Σ_e Δh_eᵀ N_e`, `C = Σ_e Δh_eᵀ T_e` and
//! `ℓ` is the polygon length. Every form is multiplied by the spec weight.
//! The rank-one corrections are kept as explicit outer products so applying
//! the operator costs O(N).

use serde::{Deserialize, Serialize};

use crate::curve::{edge_count, edges, frame_from_coords, rot90, Point2, PolygonalCurve};
use crate::error::{Error, Result};
use crate::kernels::dot;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CurveMetricKind {
    #[default]
    None,
    H1General,
    H1RotInvariant,
    H1RotScaleInvariant,
}

impl std::str::FromStr for CurveMetricKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Self::None),
            "h1_general" => Ok(Self::H1General),
            "h1_rot_invariant" => Ok(Self::H1RotInvariant),
            "h1_rot_scale_invariant" => Ok(Self::H1RotScaleInvariant),
            other => Err(Error::InvalidParameter(format!("unknown curve metric kind `{other}`"))),
        }
    }
}

/// Default multiplicative factor on the intrinsic seminorm.
pub const DEFAULT_METRIC_WEIGHT: f64 = 300.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveMetricSpec {
    pub kind: CurveMetricKind,
    #[serde(default)]
    pub alpha: f64,
    #[serde(default = "default_weight")]
    pub weight: f64,
}

fn default_weight() -> f64 {
    DEFAULT_METRIC_WEIGHT
}

impl Default for CurveMetricSpec {
    fn default() -> Self {
        Self::none()
    }
}

impl CurveMetricSpec {
    pub fn new(kind: CurveMetricKind, alpha: f64, weight: f64) -> Result<Self> {
        let spec = Self { kind, alpha, weight };
        spec.validate()?;
        Ok(spec)
    }

    /// Plain LDDMM: no intrinsic term.
    pub fn none() -> Self {
        Self { kind: CurveMetricKind::None, alpha: 0.0, weight: 1.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.weight > 0.0 && self.weight.is_finite()) {
            return Err(Error::InvalidParameter(format!("metric weight must be positive, got {}", self.weight)));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::InvalidParameter(format!("metric alpha must be nonnegative, got {}", self.alpha)));
        }
        Ok(())
    }

    pub fn is_none(&self) -> bool {
        self.kind == CurveMetricKind::None
    }
}

/// Symmetric PSD operator `G_q` of a curve seminorm, acting on flattened
/// per-vertex planar fields.
#[derive(Clone, Debug)]
pub struct CurveForm {
    n: usize,
    closed: bool,
    weight: f64,
    /// Coefficient of `|Δh_e|²` per edge.
    edge_coef: Vec<f64>,
    /// Coefficient of `|h_i|²` per vertex (zeroth-order term).
    mass: Vec<f64>,
    /// Subtracted terms `coef · (bᵀh)²`.
    rank_one: Vec<(f64, Vec<f64>)>,
}

impl CurveForm {
    pub(crate) fn from_coords(coords: &[f64], closed: bool, spec: &CurveMetricSpec) -> Result<Self> {
        let n = coords.len() / 2;
        let frame = frame_from_coords(coords, closed)?;
        let ell = frame.total_length;
        let mut form = CurveForm {
            n,
            closed,
            weight: spec.weight,
            edge_coef: Vec::new(),
            mass: Vec::new(),
            rank_one: Vec::new(),
        };
        let proj = |dirs: &[Point2]| {
            let mut b = vec![0.0; 2 * n];
            for (e, (i, j)) in edges(n, closed).enumerate() {
                for c in 0..2 {
                    b[2 * j + c] += dirs[e][c];
                    b[2 * i + c] -= dirs[e][c];
                }
            }
            b
        };
        match spec.kind {
            CurveMetricKind::None => {
                return Err(Error::InvalidParameter("seminorm operator requested for metric kind `none`".into()))
            }
            CurveMetricKind::H1General => {
                form.edge_coef = frame.edge_lengths.iter().map(|l| 1.0 / l).collect();
                if spec.alpha > 0.0 {
                    let mut mass = vec![0.0; n];
                    for (e, (i, j)) in edges(n, closed).enumerate() {
                        let half = 0.5 * spec.alpha * frame.edge_lengths[e];
                        mass[i] += half;
                        mass[j] += half;
                    }
                    form.mass = mass;
                }
            }
            CurveMetricKind::H1RotInvariant => {
                form.edge_coef = frame.edge_lengths.iter().map(|l| 1.0 / l).collect();
                form.rank_one.push((1.0 / ell, proj(&frame.unit_normals)));
            }
            CurveMetricKind::H1RotScaleInvariant => {
                form.edge_coef = frame.edge_lengths.iter().map(|l| 1.0 / (ell * l)).collect();
                let c = 1.0 / (ell * ell);
                form.rank_one.push((c, proj(&frame.unit_tangents)));
                form.rank_one.push((c, proj(&frame.unit_normals)));
            }
        }
        Ok(form)
    }

    pub fn vertex_count(&self) -> usize {
        self.n
    }

    /// `hᵀ G h`.
    pub fn value(&self, h: &[f64]) -> f64 {
        let mut acc = 0.0;
        for ((i, j), c) in edges(self.n, self.closed).zip(&self.edge_coef) {
            let dx = h[2 * j] - h[2 * i];
            let dy = h[2 * j + 1] - h[2 * i + 1];
            acc += c * (dx * dx + dy * dy);
        }
        for (i, m) in self.mass.iter().enumerate() {
            acc += m * (h[2 * i] * h[2 * i] + h[2 * i + 1] * h[2 * i + 1]);
        }
        for (c, b) in &self.rank_one {
            let p = dot(b, h);
            acc -= c * p * p;
        }
        self.weight * acc
    }

    /// Accumulates `G h` into `out`.
    pub fn apply_add(&self, h: &[f64], out: &mut [f64]) {
        let w = self.weight;
        for ((i, j), c) in edges(self.n, self.closed).zip(&self.edge_coef) {
            for k in 0..2 {
                let d = w * c * (h[2 * j + k] - h[2 * i + k]);
                out[2 * j + k] += d;
                out[2 * i + k] -= d;
            }
        }
        for (i, m) in self.mass.iter().enumerate() {
            out[2 * i] += w * m * h[2 * i];
            out[2 * i + 1] += w * m * h[2 * i + 1];
        }
        for (c, b) in &self.rank_one {
            let p = w * c * dot(b, h);
            for (o, bk) in out.iter_mut().zip(b) {
                *o -= p * bk;
            }
        }
    }

    pub fn apply(&self, h: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; h.len()];
        self.apply_add(h, &mut out);
        out
    }

    /// Dense `2N × 2N` matrix, row-major.
    pub fn to_dense(&self) -> Vec<f64> {
        let m = 2 * self.n;
        let mut dense = vec![0.0; m * m];
        let mut e = vec![0.0; m];
        for col in 0..m {
            e[col] = 1.0;
            let g = self.apply(&e);
            for row in 0..m {
                dense[row * m + col] = g[row];
            }
            e[col] = 0.0;
        }
        dense
    }
}

fn check_field(n: usize, h: &[Point2]) -> Result<()> {
    if h.len() != n {
        return Err(Error::LengthMismatch { expected: n, found: h.len() });
    }
    Ok(())
}

/// Operator `G_q` of the seminorm selected by `spec` (which must not be `none`).
pub fn seminorm_matrix(q: &PolygonalCurve, spec: &CurveMetricSpec) -> Result<CurveForm> {
    spec.validate()?;
    CurveForm::from_coords(q.coords(), q.is_closed(), spec)
}

pub fn seminorm_value(q: &PolygonalCurve, h: &[Point2], spec: &CurveMetricSpec) -> Result<f64> {
    check_field(q.len(), h)?;
    if spec.is_none() {
        return Ok(0.0);
    }
    Ok(seminorm_matrix(q, spec)?.value(h.as_flattened()))
}

/// Gradient of `q ↦ hᵀ G_q h` with the field `h` held fixed.
pub fn seminorm_shape_gradient(q: &PolygonalCurve, h: &[Point2], spec: &CurveMetricSpec) -> Result<Vec<Point2>> {
    check_field(q.len(), h)?;
    spec.validate()?;
    let mut out = vec![0.0; 2 * q.len()];
    shape_gradient_add(q.coords(), q.is_closed(), h.as_flattened(), spec, 1.0, &mut out)?;
    Ok(out.chunks_exact(2).map(|c| [c[0], c[1]]).collect())
}

/// Accumulates `scale · ∂_q (hᵀ G_q h)` into `out` (flattened coordinates).
pub(crate) fn shape_gradient_add(
    coords: &[f64],
    closed: bool,
    h: &[f64],
    spec: &CurveMetricSpec,
    scale: f64,
    out: &mut [f64],
) -> Result<()> {
    if spec.is_none() {
        return Ok(());
    }
    let n = coords.len() / 2;
    let frame = frame_from_coords(coords, closed)?;
    let ne = edge_count(n, closed);
    let ell = frame.total_length;

    // Per-edge partials with respect to Δq_e of A, B, C, ℓ and the mass term.
    let mut d_a = vec![[0.0; 2]; ne];
    let mut d_b = vec![[0.0; 2]; ne];
    let mut d_c = vec![[0.0; 2]; ne];
    let (mut a, mut b, mut c) = (0.0, 0.0, 0.0);
    let mut d_mass = vec![[0.0; 2]; ne];
    for (e, (i, j)) in edges(n, closed).enumerate() {
        let l = frame.edge_lengths[e];
        let t = frame.unit_tangents[e];
        let nrm = frame.unit_normals[e];
        let dh = [h[2 * j] - h[2 * i], h[2 * j + 1] - h[2 * i + 1]];
        let dh2 = dh[0] * dh[0] + dh[1] * dh[1];
        a += dh2 / l;
        let bt = dh[0] * nrm[0] + dh[1] * nrm[1];
        let ct = dh[0] * t[0] + dh[1] * t[1];
        b += bt;
        c += ct;
        // ∂(|Δh|²/l) = -|Δh|²/l² T
        d_a[e] = [-dh2 / (l * l) * t[0], -dh2 / (l * l) * t[1]];
        // ∂(Δhᵀ J Δq / l) = (Jᵀ Δh - (Δhᵀ N) T) / l, with Jᵀ = -J
        let jt = rot90(dh);
        d_b[e] = [(-jt[0] - bt * t[0]) / l, (-jt[1] - bt * t[1]) / l];
        // ∂(Δhᵀ Δq / l) = (Δh - (Δhᵀ T) T) / l
        d_c[e] = [(dh[0] - ct * t[0]) / l, (dh[1] - ct * t[1]) / l];
        if spec.alpha > 0.0 {
            let hi = h[2 * i] * h[2 * i] + h[2 * i + 1] * h[2 * i + 1];
            let hj = h[2 * j] * h[2 * j] + h[2 * j + 1] * h[2 * j + 1];
            let m = 0.5 * spec.alpha * (hi + hj);
            d_mass[e] = [m * t[0], m * t[1]];
        }
    }

    // Coefficients of the combination: dV = ka dA + kb dB + kc dC + kl dℓ + km dMass
    let (ka, kb, kc, kl, km) = match spec.kind {
        CurveMetricKind::None => unreachable!(),
        CurveMetricKind::H1General => (1.0, 0.0, 0.0, 0.0, 1.0),
        CurveMetricKind::H1RotInvariant => (1.0, -2.0 * b / ell, 0.0, b * b / (ell * ell), 0.0),
        CurveMetricKind::H1RotScaleInvariant => {
            let l2 = ell * ell;
            let l3 = l2 * ell;
            (1.0 / ell, -2.0 * b / l2, -2.0 * c / l2, -a / l2 + 2.0 * (b * b + c * c) / l3, 0.0)
        }
    };
    let s = scale * spec.weight;
    for (e, (i, j)) in edges(n, closed).enumerate() {
        let t = frame.unit_tangents[e];
        for k in 0..2 {
            let g = s * (ka * d_a[e][k] + kb * d_b[e][k] + kc * d_c[e][k] + kl * t[k] + km * d_mass[e][k]);
            out[2 * j + k] += g;
            out[2 * i + k] -= g;
        }
    }
    Ok(())
}

/// Block-diagonal operator over several curves sharing one concatenated field.
#[derive(Clone, Debug)]
pub struct MultiCurveForm {
    blocks: Vec<(usize, Option<CurveForm>)>,
    total: usize,
}

impl MultiCurveForm {
    pub fn vertex_count(&self) -> usize {
        self.total
    }

    pub fn value(&self, h: &[f64]) -> f64 {
        self.blocks
            .iter()
            .filter_map(|(off, f)| f.as_ref().map(|f| f.value(&h[2 * off..2 * (off + f.vertex_count())])))
            .sum()
    }

    pub fn apply(&self, h: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; h.len()];
        for (off, f) in &self.blocks {
            if let Some(f) = f {
                let r = 2 * off..2 * (off + f.vertex_count());
                f.apply_add(&h[r.clone()], &mut out[r]);
            }
        }
        out
    }
}

/// Block-diagonal assembly of per-curve seminorm operators; curves whose spec
/// kind is `none` contribute a zero block.
pub fn multi_shape_metric(shapes: &[PolygonalCurve], specs: &[CurveMetricSpec]) -> Result<MultiCurveForm> {
    if shapes.is_empty() {
        return Err(Error::InvalidParameter("no shapes given".into()));
    }
    if shapes.len() != specs.len() {
        return Err(Error::LengthMismatch { expected: shapes.len(), found: specs.len() });
    }
    let mut blocks = Vec::with_capacity(shapes.len());
    let mut off = 0;
    for (q, spec) in shapes.iter().zip(specs) {
        spec.validate()?;
        let form = if spec.is_none() { None } else { Some(seminorm_matrix(q, spec)?) };
        blocks.push((off, form));
        off += q.len();
    }
    Ok(MultiCurveForm { blocks, total: off })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::{DMatrix, SymmetricEigen};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    const KINDS: [CurveMetricKind; 3] =
        [CurveMetricKind::H1General, CurveMetricKind::H1RotInvariant, CurveMetricKind::H1RotScaleInvariant];

    fn spec(kind: CurveMetricKind) -> CurveMetricSpec {
        CurveMetricSpec::new(kind, 0.0, 1.0).unwrap()
    }

    fn random_curve(rng: &mut impl Rng, n: usize, closed: bool) -> PolygonalCurve {
        let v = (0..n)
            .map(|i| {
                let t = 2.0 * PI * i as f64 / n as f64 * if closed { 1.0 } else { 0.7 };
                let r = 1.0 + 0.3 * rng.gen_range(-1.0..1.0);
                [r * t.cos() + 0.3, 0.7 * r * t.sin() - 0.1]
            })
            .collect();
        PolygonalCurve::new(v, closed).unwrap()
    }

    fn random_field(rng: &mut impl Rng, n: usize) -> Vec<Point2> {
        (0..n).map(|_| [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]).collect()
    }

    #[test]
    fn blind_directions_vanish() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10 {
            let q = random_curve(&mut rng, 17, true);
            let scale = seminorm_value(&q, &random_field(&mut rng, 17), &spec(CurveMetricKind::H1General)).unwrap();
            let translation = vec![[0.4, -1.3]; q.len()];
            for kind in KINDS {
                let v = seminorm_value(&q, &translation, &spec(kind)).unwrap();
                assert!(v.abs() <= 1e-12 * scale, "{kind:?}: {v}");
            }
            let rotation: Vec<Point2> = q.vertices().iter().map(|&p| rot90(p)).collect();
            for kind in [CurveMetricKind::H1RotInvariant, CurveMetricKind::H1RotScaleInvariant] {
                let v = seminorm_value(&q, &rotation, &spec(kind)).unwrap();
                assert!(v.abs() <= 1e-12 * scale, "{kind:?}: {v}");
            }
            let scaling = q.vertices().to_vec();
            let v = seminorm_value(&q, &scaling, &spec(CurveMetricKind::H1RotScaleInvariant)).unwrap();
            assert!(v.abs() <= 1e-12 * scale);
            // similarity combination
            let combo: Vec<Point2> =
                q.vertices().iter().map(|&p| [0.7 * p[0] - 1.1 * p[1] + 0.2, 0.7 * p[1] + 1.1 * p[0] - 3.0]).collect();
            let v = seminorm_value(&q, &combo, &spec(CurveMetricKind::H1RotScaleInvariant)).unwrap();
            assert!(v.abs() <= 1e-12 * scale);
        }
    }

    #[test]
    fn zero_field_and_none_kind() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let q = random_curve(&mut rng, 9, false);
        for kind in KINDS {
            assert_eq!(seminorm_value(&q, &vec![[0.0; 2]; 9], &spec(kind)).unwrap(), 0.0);
        }
        let h = random_field(&mut rng, 9);
        assert_eq!(seminorm_value(&q, &h, &CurveMetricSpec::none()).unwrap(), 0.0);
        assert!(seminorm_matrix(&q, &CurveMetricSpec::none()).is_err());
        assert!(seminorm_value(&q, &h[..8], &spec(CurveMetricKind::H1General)).is_err());
        assert!(CurveMetricSpec::new(CurveMetricKind::H1General, -1.0, 1.0).is_err());
        assert!(CurveMetricSpec::new(CurveMetricKind::H1General, 0.0, 0.0).is_err());
    }

    #[test]
    fn uniform_polygon_matches_circulant_oracle() {
        // Regular n-gon: every edge has length l, so the α = 0 form is
        // (1/l) times the circulant graph Laplacian [2, -1, 0, ..., -1].
        let n = 12;
        let v: Vec<Point2> = (0..n).map(|i| 2.0 * PI * i as f64 / n as f64).map(|t| [2.0 * t.cos(), 2.0 * t.sin()]).collect();
        let q = PolygonalCurve::new(v, true).unwrap();
        let l = 4.0 * (PI / n as f64).sin();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let h = random_field(&mut rng, n);
        let mut oracle = 0.0;
        for i in 0..n {
            for j in 0..n {
                let c = if i == j {
                    2.0
                } else if (i + 1) % n == j || (j + 1) % n == i {
                    -1.0
                } else {
                    0.0
                };
                oracle += c / l * (h[i][0] * h[j][0] + h[i][1] * h[j][1]);
            }
        }
        let v = seminorm_value(&q, &h, &spec(CurveMetricKind::H1General)).unwrap();
        assert_relative_eq!(v, oracle, max_relative = 1e-12);
    }

    #[test]
    fn mass_term_of_general_kind() {
        let q = PolygonalCurve::new(vec![[0.0, 0.0], [2.0, 0.0], [2.0, 1.0]], false).unwrap();
        let s = CurveMetricSpec::new(CurveMetricKind::H1General, 0.5, 2.0).unwrap();
        // constant field: only the α term survives, α·ℓ·|h|²
        let v = seminorm_value(&q, &[[1.0, 1.0]; 3], &s).unwrap();
        assert_relative_eq!(v, 2.0 * 0.5 * 3.0 * 2.0, max_relative = 1e-14);
    }

    #[test]
    fn operator_is_psd_and_consistent() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for closed in [true, false] {
            for kind in KINDS {
                let q = random_curve(&mut rng, 14, closed);
                let s = CurveMetricSpec::new(kind, 0.3, 2.5).unwrap();
                let form = seminorm_matrix(&q, &s).unwrap();
                let m = 2 * q.len();
                let dense = DMatrix::from_row_slice(m, m, &form.to_dense());
                assert!((&dense - dense.transpose()).amax() <= 1e-12 * dense.amax());
                let eig = SymmetricEigen::new(dense.clone()).eigenvalues;
                assert!(eig.min() >= -1e-10 * eig.max(), "{kind:?} closed={closed}: {}", eig.min());
                let h = random_field(&mut rng, q.len());
                let hv = nalgebra::DVector::from_row_slice(h.as_flattened());
                let quad = hv.dot(&(&dense * &hv));
                assert_relative_eq!(quad, form.value(h.as_flattened()), max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn shape_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for closed in [true, false] {
            for kind in KINDS {
                let q = random_curve(&mut rng, 8, closed);
                let h = random_field(&mut rng, 8);
                let s = CurveMetricSpec::new(kind, 0.4, 3.0).unwrap();
                let g = seminorm_shape_gradient(&q, &h, &s).unwrap();
                let f = |v: Vec<Point2>| seminorm_value(&q.with_vertices(v).unwrap(), &h, &s).unwrap();
                for i in 0..q.len() {
                    for c in 0..2 {
                        let step = 1e-6;
                        let mut vp = q.vertices().to_vec();
                        vp[i][c] += step;
                        let mut vm = q.vertices().to_vec();
                        vm[i][c] -= step;
                        let fd = (f(vp) - f(vm)) / (2.0 * step);
                        assert_relative_eq!(g[i][c], fd, max_relative = 1e-6, epsilon = 1e-8);
                    }
                }
            }
        }
    }

    #[test]
    fn scale_behaviour() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let q = random_curve(&mut rng, 20, true);
        let h = random_field(&mut rng, 20);
        let s = 2.7;
        let qs = q.map(|p| [s * p[0], s * p[1]]).unwrap();
        let hs: Vec<Point2> = h.iter().map(|p| [s * p[0], s * p[1]]).collect();
        let rsi = spec(CurveMetricKind::H1RotScaleInvariant);
        assert_relative_eq!(seminorm_value(&qs, &hs, &rsi).unwrap(), seminorm_value(&q, &h, &rsi).unwrap(), max_relative = 1e-12);
        let ri = spec(CurveMetricKind::H1RotInvariant);
        assert_relative_eq!(seminorm_value(&qs, &h, &ri).unwrap(), seminorm_value(&q, &h, &ri).unwrap() / s, max_relative = 1e-12);
    }

    fn smooth_curve(n: usize) -> (PolygonalCurve, Vec<Point2>) {
        let pts: Vec<Point2> = (0..n)
            .map(|i| 2.0 * PI * i as f64 / n as f64)
            .map(|t| [(1.0 + 0.2 * (3.0 * t).cos()) * t.cos(), (1.0 + 0.2 * (3.0 * t).cos()) * t.sin()])
            .collect();
        let h = (0..n).map(|i| 2.0 * PI * i as f64 / n as f64).map(|t| [(2.0 * t).sin(), 0.5 * t.cos()]).collect();
        (PolygonalCurve::new(pts, true).unwrap(), h)
    }

    #[test]
    fn refinement_converges_at_second_order() {
        for kind in KINDS {
            let s = spec(kind);
            let ns = [32usize, 64, 128, 256, 2048];
            let vals: Vec<f64> = ns
                .iter()
                .map(|&n| {
                    let (q, h) = smooth_curve(n);
                    seminorm_value(&q, &h, &s).unwrap()
                })
                .collect();
            let reference = vals[4];
            let xs: Vec<f64> = ns[..4].iter().map(|&n| (n as f64).ln()).collect();
            let ys: Vec<f64> = vals[..4].iter().map(|v| (v - reference).abs().ln()).collect();
            let mx = xs.iter().sum::<f64>() / 4.0;
            let my = ys.iter().sum::<f64>() / 4.0;
            let slope = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>()
                / xs.iter().map(|x| (x - mx) * (x - mx)).sum::<f64>();
            assert!(-slope >= 1.8, "{kind:?}: observed order {}", -slope);
        }
    }

    #[test]
    fn multi_shape_is_block_diagonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let c1 = random_curve(&mut rng, 10, true);
        let c2 = random_curve(&mut rng, 7, true).map(|p| [p[0] + 5.0, p[1]]).unwrap();
        let c3 = random_curve(&mut rng, 6, false).map(|p| [p[0], p[1] + 5.0]).unwrap();
        let s = spec(CurveMetricKind::H1RotInvariant);

        let single = multi_shape_metric(std::slice::from_ref(&c1), &[s]).unwrap();
        let h1 = random_field(&mut rng, 10);
        assert_eq!(single.value(h1.as_flattened()), seminorm_value(&c1, &h1, &s).unwrap());

        let multi = multi_shape_metric(&[c1.clone(), c2.clone()], &[s, s]).unwrap();
        let mut h = h1.clone();
        h.extend(vec![[0.0; 2]; 7]);
        assert_relative_eq!(multi.value(h.as_flattened()), seminorm_value(&c1, &h1, &s).unwrap(), max_relative = 1e-15);

        let all = [c1, c2, c3];
        let specs = [s, spec(CurveMetricKind::H1RotScaleInvariant), s];
        let multi = multi_shape_metric(&all, &specs).unwrap();
        let rigid: Vec<Point2> = all
            .iter()
            .enumerate()
            .flat_map(|(k, c)| {
                let w = 0.3 + k as f64;
                c.vertices().iter().map(move |&p| [-w * p[1] + k as f64, w * p[0] - 1.0]).collect::<Vec<_>>()
            })
            .collect();
        let total = multi.value(rigid.as_flattened());
        assert!(total.abs() < 1e-11, "{total}");
        assert!(multi_shape_metric(&all, &specs[..2]).is_err());
        assert!(multi_shape_metric(&[], &[]).is_err());
    }

    proptest! {
        #[test]
        fn cyclic_relabeling_invariance(seed in 0u64..1000, shift in 1usize..12, kind_ix in 0usize..3) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let q = random_curve(&mut rng, 12, true);
            let h = random_field(&mut rng, 12);
            let mut qv = q.vertices().to_vec();
            qv.rotate_left(shift);
            let mut hv = h.clone();
            hv.rotate_left(shift);
            let s = spec(KINDS[kind_ix]);
            let a = seminorm_value(&q, &h, &s).unwrap();
            let b = seminorm_value(&PolygonalCurve::new(qv, true).unwrap(), &hv, &s).unwrap();
            prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1e-300));
        }

        #[test]
        fn rotation_equivariance(seed in 0u64..1000, angle in 0.0f64..6.3, kind_ix in 0usize..3, closed: bool) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let q = random_curve(&mut rng, 11, closed);
            let h = random_field(&mut rng, 11);
            let (s, c) = angle.sin_cos();
            let rot = |p: Point2| [c * p[0] - s * p[1], s * p[0] + c * p[1]];
            let qr = q.map(rot).unwrap();
            let hr: Vec<Point2> = h.iter().map(|&p| rot(p)).collect();
            let sp = CurveMetricSpec::new(KINDS[kind_ix], 0.2, 1.0).unwrap();
            let a = seminorm_value(&q, &h, &sp).unwrap();
            let b = seminorm_value(&qr, &hr, &sp).unwrap();
            prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1e-12));
        }
    }
}
