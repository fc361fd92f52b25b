//! Piecewise-linear H¹ seminorm `∫_S |∇_S h|² dσ` on triangulated surfaces.
//!
//! For a triangle with area `A` and edge vectors `e_k` opposite to its
//! vertices, the hat-function gradients are `J e_k / 2A` and the element
//! stiffness is `K_kl = e_k·e_l / 4A` (equivalently the cotangent weights).
//! The vector field is treated componentwise.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{cross, dot3, norm3, sub3, vertex3, Point3, TriangleMesh};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurfaceMetricSpec {
    pub weight: f64,
}

impl SurfaceMetricSpec {
    pub fn new(weight: f64) -> Result<Self> {
        let s = Self { weight };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.weight > 0.0 && self.weight.is_finite()) {
            return Err(Error::InvalidParameter(format!("surface metric weight must be positive, got {}", self.weight)));
        }
        Ok(())
    }
}

/// Edge vectors opposite each vertex and the doubled area of a triangle.
#[inline]
fn element(coords: &[f64], tri: [usize; 3]) -> ([Point3; 3], Point3) {
    let [x0, x1, x2] = tri.map(|i| vertex3(coords, i));
    let e = [sub3(x2, x1), sub3(x0, x2), sub3(x1, x0)];
    let c = cross(sub3(x1, x0), sub3(x2, x0));
    (e, c)
}

/// Scalar stiffness matrix in row-compressed form, scaled by the spec weight.
#[derive(Clone, Debug)]
pub struct StiffnessForm {
    rows: Vec<Vec<(usize, f64)>>,
}

impl StiffnessForm {
    pub(crate) fn from_coords(coords: &[f64], triangles: &[[usize; 3]], spec: &SurfaceMetricSpec) -> Result<Self> {
        let n = coords.len() / 3;
        let mut acc: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); n];
        for (t, &tri) in triangles.iter().enumerate() {
            let (e, c) = element(coords, tri);
            let area2 = norm3(c);
            if !(area2 > 0.0) {
                return Err(Error::Degenerate(format!("triangle {t} has zero area")));
            }
            // e_k·e_l / 4A with 4A = 2·|c|
            let s = spec.weight / (2.0 * area2);
            for k in 0..3 {
                for l in 0..3 {
                    *acc[tri[k]].entry(tri[l]).or_insert(0.0) += s * dot3(e[k], e[l]);
                }
            }
        }
        Ok(Self { rows: acc.into_iter().map(|r| r.into_iter().collect()).collect() })
    }

    pub fn vertex_count(&self) -> usize {
        self.rows.len()
    }

    /// Entry `(i, j)` of the scalar matrix (zero when not stored).
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.rows[i].iter().find(|(c, _)| *c == j).map_or(0.0, |(_, v)| *v)
    }

    /// Stored (structurally nonzero) column indices of row `i`.
    pub fn pattern(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        self.rows[i].iter().map(|(c, _)| *c)
    }

    /// Scalar matrix applied to a scalar per-vertex function.
    pub fn apply_scalar(&self, f: &[f64]) -> Vec<f64> {
        self.rows.iter().map(|r| r.iter().map(|(j, v)| v * f[*j]).sum()).collect()
    }

    /// Accumulates the vector operator `G h` (componentwise scalar stiffness)
    /// into `out`, with `h` flattened as `[x0, y0, z0, x1, ...]`.
    pub fn apply_add(&self, h: &[f64], out: &mut [f64]) {
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, v) in row {
                for c in 0..3 {
                    out[3 * i + c] += v * h[3 * j + c];
                }
            }
        }
    }

    pub fn value(&self, h: &[f64]) -> f64 {
        let mut g = vec![0.0; h.len()];
        self.apply_add(h, &mut g);
        g.iter().zip(h).map(|(a, b)| a * b).sum()
    }
}

pub fn stiffness_form(mesh: &TriangleMesh, spec: &SurfaceMetricSpec) -> Result<StiffnessForm> {
    spec.validate()?;
    StiffnessForm::from_coords(mesh.coords(), mesh.triangles(), spec)
}

pub fn stiffness_value(mesh: &TriangleMesh, h: &[Point3], spec: &SurfaceMetricSpec) -> Result<f64> {
    if h.len() != mesh.vertex_count() {
        return Err(Error::LengthMismatch { expected: mesh.vertex_count(), found: h.len() });
    }
    Ok(stiffness_form(mesh, spec)?.value(h.as_flattened()))
}

/// Gradient of `q ↦ hᵀ G_q h` with respect to the vertex positions.
pub fn stiffness_shape_gradient(mesh: &TriangleMesh, h: &[Point3], spec: &SurfaceMetricSpec) -> Result<Vec<Point3>> {
    if h.len() != mesh.vertex_count() {
        return Err(Error::LengthMismatch { expected: mesh.vertex_count(), found: h.len() });
    }
    spec.validate()?;
    let mut out = vec![0.0; 3 * mesh.vertex_count()];
    shape_gradient_add(mesh.coords(), mesh.triangles(), h.as_flattened(), spec, 1.0, &mut out)?;
    Ok(out.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect())
}

/// Accumulates `scale · ∂_q (hᵀ G_q h)` into `out`.
///
/// Per element the energy is `‖M‖²_F / 4A` with `M = Σ_k h_k e_kᵀ`.
pub(crate) fn shape_gradient_add(
    coords: &[f64],
    triangles: &[[usize; 3]],
    h: &[f64],
    spec: &SurfaceMetricSpec,
    scale: f64,
    out: &mut [f64],
) -> Result<()> {
    let s = scale * spec.weight;
    for (t, &tri) in triangles.iter().enumerate() {
        let (e, c) = element(coords, tri);
        let area2 = norm3(c);
        if !(area2 > 0.0) {
            return Err(Error::Degenerate(format!("triangle {t} has zero area")));
        }
        let area = 0.5 * area2;
        let hv = tri.map(|i| vertex3(h, i));
        // M = Σ_k h_k e_kᵀ (row a, column b)
        let mut m = [[0.0; 3]; 3];
        for k in 0..3 {
            for a in 0..3 {
                for b in 0..3 {
                    m[a][b] += hv[k][a] * e[k][b];
                }
            }
        }
        let m2: f64 = m.iter().flatten().map(|v| v * v).sum();
        // ∂E/∂e_k = Mᵀ h_k / 2A
        let mut de = [[0.0; 3]; 3];
        for k in 0..3 {
            for b in 0..3 {
                de[k][b] = (0..3).map(|a| m[a][b] * hv[k][a]).sum::<f64>() / (2.0 * area);
            }
        }
        // ∂E/∂A = -‖M‖² / 4A², ∂A/∂x_k = ½ n × e_k
        let d_area = -m2 / (4.0 * area * area);
        let nrm = [c[0] / area2, c[1] / area2, c[2] / area2];
        let mut g = [[0.0; 3]; 3];
        for k in 0..3 {
            let na = cross(nrm, e[k]);
            for b in 0..3 {
                g[k][b] += 0.5 * d_area * na[b];
            }
        }
        // e_0 = x2 - x1, e_1 = x0 - x2, e_2 = x1 - x0
        for b in 0..3 {
            g[2][b] += de[0][b];
            g[1][b] -= de[0][b];
            g[0][b] += de[1][b];
            g[2][b] -= de[1][b];
            g[1][b] += de[2][b];
            g[0][b] -= de[2][b];
        }
        for k in 0..3 {
            for b in 0..3 {
                out[3 * tri[k] + b] += s * g[k][b];
            }
        }
    }
    Ok(())
}
