//! Triangulated surfaces in ℝ³.

use std::collections::HashMap;

use crate::error::{Error, Result};

pub type Point3 = [f64; 3];

#[inline]
pub(crate) fn sub3(a: Point3, b: Point3) -> Point3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub(crate) fn cross(a: Point3, b: Point3) -> Point3 {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

#[inline]
pub(crate) fn dot3(a: Point3, b: Point3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub(crate) fn norm3(a: Point3) -> f64 {
    dot3(a, a).sqrt()
}

#[inline]
pub(crate) fn vertex3(coords: &[f64], i: usize) -> Point3 {
    [coords[3 * i], coords[3 * i + 1], coords[3 * i + 2]]
}

#[derive(Clone, Debug, PartialEq)]
pub struct TriangleMesh {
    vertices: Vec<Point3>,
    triangles: Vec<[usize; 3]>,
}

impl TriangleMesh {
    pub fn new(vertices: Vec<Point3>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        let n = vertices.len();
        if vertices.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidMesh("non-finite vertex coordinate".into()));
        }
        let mut edge_use: HashMap<(usize, usize), u32> = HashMap::new();
        for (t, tri) in triangles.iter().enumerate() {
            if tri.iter().any(|&i| i >= n) {
                return Err(Error::InvalidMesh(format!("triangle {t} references a vertex out of range")));
            }
            if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
                return Err(Error::InvalidMesh(format!("triangle {t} repeats a vertex")));
            }
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                let count = edge_use.entry((a.min(b), a.max(b))).or_default();
                *count += 1;
                if *count > 2 {
                    return Err(Error::InvalidMesh(format!("edge ({a}, {b}) is shared by more than two triangles")));
                }
            }
        }
        let mesh = Self { vertices, triangles };
        for t in 0..mesh.triangles.len() {
            if !(mesh.triangle_area(t) > 0.0) {
                return Err(Error::Degenerate(format!("triangle {t} has zero area")));
            }
        }
        Ok(mesh)
    }

    pub fn vertices(&self) -> &[Point3] {
        &self.vertices
    }

    pub fn coords(&self) -> &[f64] {
        self.vertices.as_flattened()
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t].map(|i| self.vertices[i]);
        0.5 * norm3(cross(sub3(b, a), sub3(c, a)))
    }

    pub fn area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.triangle_area(t)).sum()
    }

    pub fn with_vertices(&self, vertices: Vec<Point3>) -> Result<Self> {
        if vertices.len() != self.vertices.len() {
            return Err(Error::LengthMismatch { expected: self.vertices.len(), found: vertices.len() });
        }
        Self::new(vertices, self.triangles.clone())
    }

    pub fn map(&self, f: impl Fn(Point3) -> Point3) -> Result<Self> {
        self.with_vertices(self.vertices.iter().map(|&p| f(p)).collect())
    }

    /// Disjoint union; indices of `other` are shifted.
    pub fn merge(&self, other: &TriangleMesh) -> Result<Self> {
        let off = self.vertices.len();
        let mut v = self.vertices.clone();
        v.extend_from_slice(&other.vertices);
        let mut t = self.triangles.clone();
        t.extend(other.triangles.iter().map(|tri| tri.map(|i| i + off)));
        Self::new(v, t)
    }

    /// Unique undirected edges, sorted.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut e: Vec<(usize, usize)> = self
            .triangles
            .iter()
            .flat_map(|t| (0..3).map(move |k| (t[k].min(t[(k + 1) % 3]), t[k].max(t[(k + 1) % 3]))))
            .collect();
        e.sort_unstable();
        e.dedup();
        e
    }

    /// Connected-component label per vertex (isolated vertices get their own
    /// label), labels numbered in order of first appearance.
    pub fn component_labels(&self) -> Vec<usize> {
        let n = self.vertices.len();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        for t in &self.triangles {
            for k in 1..3 {
                let (a, b) = (find(&mut parent, t[0]), find(&mut parent, t[k]));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
        let mut map = HashMap::new();
        (0..n)
            .map(|i| {
                let root = find(&mut parent, i);
                let next = map.len();
                *map.entry(root).or_insert(next)
            })
            .collect()
    }

    pub fn component_count(&self) -> usize {
        self.component_labels().into_iter().max().map_or(0, |m| m + 1)
    }
}

/// Icosahedron inscribed in the unit sphere, subdivided `level` times with
/// vertices projected back to the sphere. Triangles are oriented outward.
pub fn icosphere(level: u32) -> TriangleMesh {
    let p = (1.0 + 5f64.sqrt()) / 2.0;
    let mut v: Vec<Point3> = vec![
        [-1.0, p, 0.0],
        [1.0, p, 0.0],
        [-1.0, -p, 0.0],
        [1.0, -p, 0.0],
        [0.0, -1.0, p],
        [0.0, 1.0, p],
        [0.0, -1.0, -p],
        [0.0, 1.0, -p],
        [p, 0.0, -1.0],
        [p, 0.0, 1.0],
        [-p, 0.0, -1.0],
        [-p, 0.0, 1.0],
    ];
    let normalize = |a: Point3| {
        let r = norm3(a);
        [a[0] / r, a[1] / r, a[2] / r]
    };
    for x in v.iter_mut() {
        *x = normalize(*x);
    }
    let mut t: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..level {
        let mut mid: HashMap<(usize, usize), usize> = HashMap::new();
        let mut midpoint = |a: usize, b: usize, v: &mut Vec<Point3>| {
            *mid.entry((a.min(b), a.max(b))).or_insert_with(|| {
                let (x, y) = (v[a], v[b]);
                v.push(normalize([(x[0] + y[0]) / 2.0, (x[1] + y[1]) / 2.0, (x[2] + y[2]) / 2.0]));
                v.len() - 1
            })
        };
        let mut next = Vec::with_capacity(t.len() * 4);
        for &[a, b, c] in &t {
            let ab = midpoint(a, b, &mut v);
            let bc = midpoint(b, c, &mut v);
            let ca = midpoint(c, a, &mut v);
            next.extend_from_slice(&[[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        t = next;
    }
    TriangleMesh::new(v, t).expect("icosphere construction is valid")
}
