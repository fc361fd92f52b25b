//! Unoriented varifold discrepancy between discretised curves or surfaces.
//!
//! Each edge (or triangle) becomes an atom `(center, unit normal, mass)` and
//!
//! ```text
//! ⟨A, B⟩ = Σ_i Σ_j χ(c_i, c_j) (1 + κ (ν_iᵀ ν_j)²) m_i m_j
//! D(A, B) = ⟨A, A⟩ - 2⟨A, B⟩ + ⟨B, B⟩
//! ```
//!
//! with `χ` Gaussian of width `τ` and `κ` the normal weight. The squared
//! alignment makes the distance blind to orientation.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::curve::{edges, frame_from_coords, rot90, Point2, PolygonalCurve};
use crate::error::{Error, Result};
use crate::kernels::{dot, sq_dist, GaussianKernelSpec};
use crate::mesh::{cross, norm3, sub3, vertex3, Point3, TriangleMesh};

const PAR_THRESHOLD: usize = 4096;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VarifoldSpec {
    pub kernel: GaussianKernelSpec,
    pub normal_weight: f64,
}

impl VarifoldSpec {
    pub fn new(width: f64, normal_weight: f64) -> Result<Self> {
        let s = Self { kernel: GaussianKernelSpec::new(width)?, normal_weight };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        GaussianKernelSpec::new(self.kernel.width)?;
        if !(self.normal_weight >= 0.0 && self.normal_weight.is_finite()) {
            return Err(Error::InvalidParameter(format!("normal weight must be nonnegative, got {}", self.normal_weight)));
        }
        Ok(())
    }
}

impl Default for VarifoldSpec {
    fn default() -> Self {
        Self { kernel: GaussianKernelSpec { width: 2.0 }, normal_weight: 1.0 }
    }
}

/// Flattened atom arrays of ambient dimension `dim`.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct VarifoldAtoms {
    pub dim: usize,
    pub centers: Vec<f64>,
    pub normals: Vec<f64>,
    pub masses: Vec<f64>,
}

impl VarifoldAtoms {
    pub fn new(dim: usize, centers: Vec<f64>, normals: Vec<f64>, masses: Vec<f64>) -> Result<Self> {
        let n = masses.len();
        if centers.len() != n * dim || normals.len() != n * dim {
            return Err(Error::LengthMismatch { expected: n * dim, found: centers.len().max(normals.len()) });
        }
        if masses.iter().any(|&m| !(m > 0.0)) {
            return Err(Error::Degenerate("atom mass must be positive".into()));
        }
        for nrm in normals.chunks_exact(dim.max(1)) {
            if (dot(nrm, nrm) - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidParameter("atom normal is not a unit vector".into()));
            }
        }
        Ok(Self { dim, centers, normals, masses })
    }

    pub fn len(&self) -> usize {
        self.masses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masses.is_empty()
    }

    pub fn total_mass(&self) -> f64 {
        self.masses.iter().sum()
    }

    pub fn center(&self, i: usize) -> &[f64] {
        &self.centers[i * self.dim..(i + 1) * self.dim]
    }

    pub fn normal(&self, i: usize) -> &[f64] {
        &self.normals[i * self.dim..(i + 1) * self.dim]
    }

    pub fn extend(&mut self, other: &VarifoldAtoms) {
        if self.is_empty() {
            self.dim = other.dim;
        }
        self.centers.extend_from_slice(&other.centers);
        self.normals.extend_from_slice(&other.normals);
        self.masses.extend_from_slice(&other.masses);
    }
}

pub fn atoms_from_curve(q: &PolygonalCurve) -> Result<VarifoldAtoms> {
    curve_atoms(q.coords(), q.is_closed())
}

/// Pooled atoms of several curves (an unlabeled union).
pub fn atoms_from_curves(curves: &[PolygonalCurve]) -> Result<VarifoldAtoms> {
    let mut out = VarifoldAtoms { dim: 2, ..Default::default() };
    for c in curves {
        out.extend(&atoms_from_curve(c)?);
    }
    Ok(out)
}

pub(crate) fn curve_atoms(coords: &[f64], closed: bool) -> Result<VarifoldAtoms> {
    let frame = frame_from_coords(coords, closed)?;
    let n = coords.len() / 2;
    let mut atoms = VarifoldAtoms { dim: 2, ..Default::default() };
    for (e, (i, j)) in edges(n, closed).enumerate() {
        atoms.centers.push(0.5 * (coords[2 * i] + coords[2 * j]));
        atoms.centers.push(0.5 * (coords[2 * i + 1] + coords[2 * j + 1]));
        atoms.normals.extend_from_slice(&frame.unit_normals[e]);
        atoms.masses.push(frame.edge_lengths[e]);
    }
    Ok(atoms)
}

pub fn atoms_from_mesh(mesh: &TriangleMesh) -> Result<VarifoldAtoms> {
    mesh_atoms(mesh.coords(), mesh.triangles())
}

pub(crate) fn mesh_atoms(coords: &[f64], triangles: &[[usize; 3]]) -> Result<VarifoldAtoms> {
    let mut atoms = VarifoldAtoms { dim: 3, ..Default::default() };
    for (t, tri) in triangles.iter().enumerate() {
        let [x0, x1, x2] = tri.map(|i| vertex3(coords, i));
        let c = cross(sub3(x1, x0), sub3(x2, x0));
        let a2 = norm3(c);
        if !(a2 > 0.0) {
            return Err(Error::Degenerate(format!("triangle {t} has zero area")));
        }
        for k in 0..3 {
            atoms.centers.push((x0[k] + x1[k] + x2[k]) / 3.0);
            atoms.normals.push(c[k] / a2);
        }
        atoms.masses.push(0.5 * a2);
    }
    Ok(atoms)
}

fn check_dims(a: &VarifoldAtoms, b: &VarifoldAtoms) -> Result<()> {
    if !a.is_empty() && !b.is_empty() && a.dim != b.dim {
        return Err(Error::DimensionMismatch { expected: a.dim, found: b.dim });
    }
    Ok(())
}

#[inline]
fn pair_weight(a: &VarifoldAtoms, i: usize, b: &VarifoldAtoms, j: usize, spec: &VarifoldSpec) -> f64 {
    let chi = spec.kernel.eval_sq(sq_dist(a.center(i), b.center(j)));
    let al = dot(a.normal(i), b.normal(j));
    chi * (1.0 + spec.normal_weight * al * al) * a.masses[i] * b.masses[j]
}

pub fn varifold_inner(a: &VarifoldAtoms, b: &VarifoldAtoms, spec: &VarifoldSpec) -> Result<f64> {
    check_dims(a, b)?;
    Ok(inner_unchecked(a, b, spec))
}

pub(crate) fn inner_unchecked(a: &VarifoldAtoms, b: &VarifoldAtoms, spec: &VarifoldSpec) -> f64 {
    let row = |i: usize| -> f64 { (0..b.len()).map(|j| pair_weight(a, i, b, j, spec)).sum() };
    if a.len() * b.len() >= PAR_THRESHOLD {
        // collect-then-sum keeps the reduction order fixed
        let rows: Vec<f64> = (0..a.len()).into_par_iter().map(row).collect();
        rows.iter().sum()
    } else {
        (0..a.len()).map(row).sum()
    }
}

pub fn varifold_distance(a: &VarifoldAtoms, b: &VarifoldAtoms, spec: &VarifoldSpec) -> Result<f64> {
    check_dims(a, b)?;
    Ok(distance_unchecked(a, b, spec))
}

pub(crate) fn distance_unchecked(a: &VarifoldAtoms, b: &VarifoldAtoms, spec: &VarifoldSpec) -> f64 {
    inner_unchecked(a, a, spec) - 2.0 * inner_unchecked(a, b, spec) + inner_unchecked(b, b, spec)
}

/// Partial derivatives of `D(A, B)` with respect to the atoms of `A`.
pub(crate) struct AtomGradient {
    pub centers: Vec<f64>,
    pub normals: Vec<f64>,
    pub masses: Vec<f64>,
}

pub(crate) fn distance_atom_gradient(a: &VarifoldAtoms, b: &VarifoldAtoms, spec: &VarifoldSpec) -> AtomGradient {
    let d = a.dim;
    let tau2 = spec.kernel.width * spec.kernel.width;
    let kappa = spec.normal_weight;
    // ∂⟨A, X⟩ / ∂(atom i of A), accumulated into (centers, normals, mass)
    let partial = |i: usize, other: &VarifoldAtoms| -> (Vec<f64>, Vec<f64>, f64) {
        let mut gc = vec![0.0; d];
        let mut gn = vec![0.0; d];
        let mut gm = 0.0;
        let ci = a.center(i);
        let ni = a.normal(i);
        let mi = a.masses[i];
        for j in 0..other.len() {
            let cj = other.center(j);
            let nj = other.normal(j);
            let mj = other.masses[j];
            let chi = spec.kernel.eval_sq(sq_dist(ci, cj));
            let al = dot(ni, nj);
            let ang = 1.0 + kappa * al * al;
            let w = chi * mj;
            for k in 0..d {
                gc[k] -= w * ang * mi * (ci[k] - cj[k]) / tau2;
                gn[k] += w * 2.0 * kappa * al * nj[k] * mi;
            }
            gm += w * ang;
        }
        (gc, gn, gm)
    };
    // kept separate so that identical atom sets cancel exactly
    let per_atom = |i: usize| -> (Vec<f64>, Vec<f64>, f64) {
        let (sc, sn, sm) = partial(i, a);
        let (xc, xn, xm) = partial(i, b);
        let diff = |s: Vec<f64>, x: Vec<f64>| s.iter().zip(&x).map(|(u, v)| 2.0 * (u - v)).collect::<Vec<f64>>();
        (diff(sc, xc), diff(sn, xn), 2.0 * (sm - xm))
    };
    let parts: Vec<(Vec<f64>, Vec<f64>, f64)> = if a.len() * (a.len() + b.len()) >= PAR_THRESHOLD {
        (0..a.len()).into_par_iter().map(per_atom).collect()
    } else {
        (0..a.len()).map(per_atom).collect()
    };
    let mut out = AtomGradient { centers: Vec::with_capacity(a.len() * d), normals: Vec::with_capacity(a.len() * d), masses: Vec::with_capacity(a.len()) };
    for (gc, gn, gm) in parts {
        out.centers.extend(gc);
        out.normals.extend(gn);
        out.masses.push(gm);
    }
    out
}

/// Pulls atom partials of a curve back to its vertices, accumulating into
/// `out`. `atom_offset` locates the curve's first edge among the atoms.
pub(crate) fn curve_pullback_add(coords: &[f64], closed: bool, g: &AtomGradient, atom_offset: usize, out: &mut [f64]) -> Result<()> {
    let frame = frame_from_coords(coords, closed)?;
    let n = coords.len() / 2;
    for (e, (i, j)) in edges(n, closed).enumerate() {
        let a = atom_offset + e;
        let l = frame.edge_lengths[e];
        let t = frame.unit_tangents[e];
        let nrm = frame.unit_normals[e];
        let gc: Point2 = [g.centers[2 * a], g.centers[2 * a + 1]];
        let gn: Point2 = [g.normals[2 * a], g.normals[2 * a + 1]];
        let gm = g.masses[a];
        // N = J Δ / l  ⇒  ∂/∂Δ = (Jᵀ g_n - T (Nᵀ g_n)) / l, Jᵀ = -J
        let jg = rot90(gn);
        let ndot = nrm[0] * gn[0] + nrm[1] * gn[1];
        for k in 0..2 {
            let gd = (-jg[k] - t[k] * ndot) / l + gm * t[k];
            out[2 * j + k] += 0.5 * gc[k] + gd;
            out[2 * i + k] += 0.5 * gc[k] - gd;
        }
    }
    Ok(())
}

pub(crate) fn mesh_pullback_add(coords: &[f64], triangles: &[[usize; 3]], g: &AtomGradient, out: &mut [f64]) -> Result<()> {
    for (t, tri) in triangles.iter().enumerate() {
        let [x0, x1, x2] = tri.map(|i| vertex3(coords, i));
        let e = sub3(x1, x0);
        let f = sub3(x2, x0);
        let c = cross(e, f);
        let a2 = norm3(c);
        if !(a2 > 0.0) {
            return Err(Error::Degenerate(format!("triangle {t} has zero area")));
        }
        let nrm = [c[0] / a2, c[1] / a2, c[2] / a2];
        let gn = [g.normals[3 * t], g.normals[3 * t + 1], g.normals[3 * t + 2]];
        let gm = g.masses[t];
        // n = c/|c|, m = |c|/2
        let nd = nrm[0] * gn[0] + nrm[1] * gn[1] + nrm[2] * gn[2];
        let gc: Point3 = std::array::from_fn(|k| (gn[k] - nrm[k] * nd) / a2 + 0.5 * gm * nrm[k]);
        let ge = cross(f, gc);
        let gf = cross(gc, e);
        for k in 0..3 {
            let center = g.centers[3 * t + k] / 3.0;
            out[3 * tri[0] + k] += center - ge[k] - gf[k];
            out[3 * tri[1] + k] += center + ge[k];
            out[3 * tri[2] + k] += center + gf[k];
        }
    }
    Ok(())
}

/// Gradient of `D(atoms(curves), target)` with respect to every vertex of the
/// (pooled) curves.
pub fn varifold_gradient_curves(curves: &[PolygonalCurve], target: &VarifoldAtoms, spec: &VarifoldSpec) -> Result<Vec<Point2>> {
    let atoms = atoms_from_curves(curves)?;
    check_dims(&atoms, target)?;
    let g = distance_atom_gradient(&atoms, target, spec);
    let mut out = Vec::new();
    let mut atom_offset = 0;
    for c in curves {
        let mut part = vec![0.0; 2 * c.len()];
        curve_pullback_add(c.coords(), c.is_closed(), &g, atom_offset, &mut part)?;
        atom_offset += c.edge_count();
        out.extend(part.chunks_exact(2).map(|p| [p[0], p[1]]));
    }
    Ok(out)
}

pub fn varifold_gradient_curve(q: &PolygonalCurve, target: &VarifoldAtoms, spec: &VarifoldSpec) -> Result<Vec<Point2>> {
    varifold_gradient_curves(std::slice::from_ref(q), target, spec)
}

pub fn varifold_gradient_mesh(mesh: &TriangleMesh, target: &VarifoldAtoms, spec: &VarifoldSpec) -> Result<Vec<Point3>> {
    let atoms = atoms_from_mesh(mesh)?;
    check_dims(&atoms, target)?;
    let g = distance_atom_gradient(&atoms, target, spec);
    let mut out = vec![0.0; 3 * mesh.vertex_count()];
    mesh_pullback_add(mesh.coords(), mesh.triangles(), &g, &mut out)?;
    Ok(out.chunks_exact(3).map(|p| [p[0], p[1], p[2]]).collect())
}
