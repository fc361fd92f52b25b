//! Planar polygonal curves and their per-edge frames.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Point2 = [f64; 2];

/// Rotation by +90°.
#[inline]
pub fn rot90(v: Point2) -> Point2 {
    [-v[1], v[0]]
}

/// A polygon in the plane, open or closed.
///
/// Edges are `(v_i, v_{i+1})`; closed curves add the wrap-around edge
/// `(v_{n-1}, v_0)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CurveRecord", into = "CurveRecord")]
pub struct PolygonalCurve {
    vertices: Vec<Point2>,
    closed: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct CurveRecord {
    closed: bool,
    vertices: Vec<Point2>,
}

impl TryFrom<CurveRecord> for PolygonalCurve {
    type Error = Error;
    fn try_from(r: CurveRecord) -> Result<Self> {
        PolygonalCurve::new(r.vertices, r.closed)
    }
}

impl From<PolygonalCurve> for CurveRecord {
    fn from(c: PolygonalCurve) -> Self {
        CurveRecord { closed: c.closed, vertices: c.vertices }
    }
}

impl PolygonalCurve {
    pub fn new(vertices: Vec<Point2>, closed: bool) -> Result<Self> {
        let min = if closed { 3 } else { 2 };
        if vertices.len() < min {
            return Err(Error::Degenerate(format!(
                "{} curve needs at least {min} vertices, got {}",
                if closed { "closed" } else { "open" },
                vertices.len()
            )));
        }
        if vertices.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Degenerate("non-finite vertex coordinate".into()));
        }
        let curve = Self { vertices, closed };
        for (e, (i, j)) in curve.edges().enumerate() {
            if curve.vertices[i] == curve.vertices[j] {
                return Err(Error::Degenerate(format!("zero-length edge {e} between vertices {i} and {j}")));
            }
        }
        Ok(curve)
    }

    pub fn vertices(&self) -> &[Point2] {
        &self.vertices
    }

    pub fn coords(&self) -> &[f64] {
        self.vertices.as_flattened()
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn edge_count(&self) -> usize {
        edge_count(self.vertices.len(), self.closed)
    }

    /// Vertex index pairs of every edge, in order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> {
        edges(self.vertices.len(), self.closed)
    }

    /// Same topology, new coordinates (validated).
    pub fn with_vertices(&self, vertices: Vec<Point2>) -> Result<Self> {
        if vertices.len() != self.vertices.len() {
            return Err(Error::LengthMismatch { expected: self.vertices.len(), found: vertices.len() });
        }
        Self::new(vertices, self.closed)
    }

    pub fn map(&self, f: impl Fn(Point2) -> Point2) -> Result<Self> {
        Self::new(self.vertices.iter().map(|&p| f(p)).collect(), self.closed)
    }

    pub fn length(&self) -> f64 {
        self.edges().map(|(i, j)| dist(self.vertices[i], self.vertices[j])).sum()
    }
}

pub(crate) fn edge_count(n: usize, closed: bool) -> usize {
    if closed {
        n
    } else {
        n.saturating_sub(1)
    }
}

pub(crate) fn edges(n: usize, closed: bool) -> impl Iterator<Item = (usize, usize)> {
    (0..edge_count(n, closed)).map(move |i| (i, (i + 1) % n))
}

#[inline]
pub(crate) fn dist(a: Point2, b: Point2) -> f64 {
    (b[0] - a[0]).hypot(b[1] - a[1])
}

/// Per-edge differential geometry of a polygon.
#[derive(Clone, Debug, PartialEq)]
pub struct CurveFrame {
    pub edge_lengths: Vec<f64>,
    pub unit_tangents: Vec<Point2>,
    pub unit_normals: Vec<Point2>,
    pub total_length: f64,
}

pub fn curve_frame(q: &PolygonalCurve) -> Result<CurveFrame> {
    frame_from_coords(q.coords(), q.is_closed())
}

pub(crate) fn frame_from_coords(coords: &[f64], closed: bool) -> Result<CurveFrame> {
    let n = coords.len() / 2;
    let ne = edge_count(n, closed);
    let mut frame = CurveFrame {
        edge_lengths: Vec::with_capacity(ne),
        unit_tangents: Vec::with_capacity(ne),
        unit_normals: Vec::with_capacity(ne),
        total_length: 0.0,
    };
    for (e, (i, j)) in edges(n, closed).enumerate() {
        let d = [coords[2 * j] - coords[2 * i], coords[2 * j + 1] - coords[2 * i + 1]];
        let l = d[0].hypot(d[1]);
        if !(l > 0.0) {
            return Err(Error::Degenerate(format!("zero-length edge {e}")));
        }
        let t = [d[0] / l, d[1] / l];
        frame.edge_lengths.push(l);
        frame.unit_tangents.push(t);
        frame.unit_normals.push(rot90(t));
        frame.total_length += l;
    }
    Ok(frame)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn regular_polygon(n: usize) -> PolygonalCurve {
        let v = (0..n).map(|i| {
            let t = 2.0 * PI * i as f64 / n as f64;
            [t.cos(), t.sin()]
        });
        PolygonalCurve::new(v.collect(), true).unwrap()
    }

    #[test]
    fn unit_square_frame() {
        let sq = PolygonalCurve::new(vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]], true).unwrap();
        let f = curve_frame(&sq).unwrap();
        assert_eq!(f.total_length, 4.0);
        assert_eq!(f.unit_tangents, vec![[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]]);
        assert_eq!(f.unit_normals[0], [0.0, 1.0]);
    }

    #[test]
    fn single_segment() {
        let s = PolygonalCurve::new(vec![[0.0, 0.0], [3.0, 4.0]], false).unwrap();
        let f = curve_frame(&s).unwrap();
        assert_eq!(f.edge_lengths, vec![5.0]);
        assert_relative_eq!(f.unit_tangents[0].as_slice(), [0.6, 0.8].as_slice(), epsilon = 1e-15);
        assert_relative_eq!(f.unit_normals[0].as_slice(), [-0.8, 0.6].as_slice(), epsilon = 1e-15);
    }

    #[test]
    fn regular_polygon_length() {
        for n in [3, 7, 64] {
            let f = curve_frame(&regular_polygon(n)).unwrap();
            let expect = 2.0 * n as f64 * (PI / n as f64).sin();
            assert_relative_eq!(f.total_length, expect, max_relative = 1e-14);
            let sum: f64 = f.edge_lengths.iter().sum();
            assert_eq!(sum, f.total_length);
            for (t, nrm) in f.unit_tangents.iter().zip(&f.unit_normals) {
                assert_relative_eq!(t[0].hypot(t[1]), 1.0, epsilon = 1e-15);
                assert_eq!(*nrm, rot90(*t));
            }
        }
    }

    #[test]
    fn rejects_degenerate_input() {
        assert!(PolygonalCurve::new(vec![[0.0, 0.0], [1.0, 0.0]], true).is_err());
        assert!(PolygonalCurve::new(vec![[0.0, 0.0]], false).is_err());
        assert!(PolygonalCurve::new(vec![[0.0, 0.0], [1.0, 0.0], [1.0, 0.0]], false).is_err());
        // wrap-around edge is degenerate only for closed curves
        let v = vec![[0.0, 0.0], [1.0, 0.0], [0.0, 0.0]];
        assert!(PolygonalCurve::new(v.clone(), false).is_ok());
        assert!(PolygonalCurve::new(v, true).is_err());
        assert!(PolygonalCurve::new(vec![[0.0, f64::NAN], [1.0, 0.0]], false).is_err());
    }
}
