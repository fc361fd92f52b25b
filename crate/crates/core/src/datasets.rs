//! Deterministic synthetic shapes for the registration experiments.

use std::f64::consts::PI;

use crate::curve::{Point2, PolygonalCurve};
use crate::mesh::{icosphere, Point3, TriangleMesh};

pub const CARDIOID_VERTICES: usize = 100;
pub const CARDIOID_LONG_AXIS: f64 = 10.0;
pub const RAY_COUNT: usize = 10;
pub const RAY_LENGTH: f64 = 10.0;
pub const HALF_CIRCLE_RADIUS: f64 = 10.0;

/// Indices of the nested-ellipse components.
pub const LARGE: usize = 0;
pub const LEFT: usize = 1;
pub const RIGHT: usize = 2;

#[derive(Clone, Debug, PartialEq)]
pub struct CurvePair {
    pub template: Vec<PolygonalCurve>,
    pub target: Vec<PolygonalCurve>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NestedEllipses {
    pub template: Vec<PolygonalCurve>,
    pub target: Vec<PolygonalCurve>,
    /// `(template component, target component)` pairs of the end-point cost.
    pub pairing: Vec<(usize, usize)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CurveFamily {
    pub template: Vec<PolygonalCurve>,
    pub target: Vec<PolygonalCurve>,
    /// Reference length: common ray length, or largest half-circle radius.
    pub length: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SurfacePair {
    pub template: TriangleMesh,
    pub target: TriangleMesh,
    /// Height of the central structure, the unit of the experiment.
    pub height: f64,
}

fn similarity(p: Point2, scale: f64, angle: f64, center: Point2, shift: Point2) -> Point2 {
    let (s, c) = angle.sin_cos();
    let (x, y) = (p[0] - center[0], p[1] - center[1]);
    [center[0] + shift[0] + scale * (c * x - s * y), center[1] + shift[1] + scale * (s * x + c * y)]
}

/// `n` points on a closed dense polyline with all `n` chords (including the
/// closing one) of equal length, starting at `dense[0]`.
pub(crate) fn equal_chord_resample(dense: &[Point2], n: usize) -> Vec<Point2> {
    let m = dense.len();
    let mut cum = vec![0.0; m + 1];
    for i in 0..m {
        let a = dense[i];
        let b = dense[(i + 1) % m];
        cum[i + 1] = cum[i] + (b[0] - a[0]).hypot(b[1] - a[1]);
    }
    let total = cum[m];
    let point_at = |s: f64| -> Point2 {
        let laps = (s / total).floor();
        let r = s - laps * total;
        let i = cum.partition_point(|&c| c <= r).clamp(1, m) - 1;
        let t = (r - cum[i]) / (cum[i + 1] - cum[i]);
        let (a, b) = (dense[i], dense[(i + 1) % m]);
        [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]
    };
    // Arc positions of the walk with chord `c`; each step takes the first
    // point ahead at distance `c`, located by bracketing then bisection.
    let walk = |c: f64| -> Vec<f64> {
        let mut pos = vec![0.0];
        let step = total / (8.0 * m as f64);
        for _ in 0..n {
            let s0 = *pos.last().unwrap();
            let p0 = point_at(s0);
            let dist = |s: f64| {
                let p = point_at(s);
                (p[0] - p0[0]).hypot(p[1] - p0[1]) - c
            };
            let mut lo = s0;
            let mut hi = s0 + step;
            while dist(hi) < 0.0 {
                lo = hi;
                hi += step;
            }
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                if dist(mid) < 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            pos.push(0.5 * (lo + hi));
        }
        pos
    };
    // The n-th step must come back to the start: bisect on the chord.
    let mut lo = 0.5 * total / n as f64;
    let mut hi = total / n as f64;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if walk(mid)[n] < total {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let pos = walk(0.5 * (lo + hi));
    pos[..n].iter().map(|&s| point_at(s)).collect()
}

/// Circular Gaussian smoothing of a uniformly sampled closed curve.
fn smooth_periodic(points: &[Point2], sigma_samples: f64) -> Vec<Point2> {
    let m = points.len() as isize;
    let half = (5.0 * sigma_samples).ceil() as isize;
    let weights: Vec<f64> = (-half..=half).map(|k| (-0.5 * (k as f64 / sigma_samples).powi(2)).exp()).collect();
    let wsum: f64 = weights.iter().sum();
    (0..m)
        .map(|i| {
            let mut acc = [0.0; 2];
            for (k, w) in (-half..=half).zip(&weights) {
                let p = points[(i + k).rem_euclid(m) as usize];
                acc[0] += w * p[0];
                acc[1] += w * p[1];
            }
            [acc[0] / wsum, acc[1] / wsum]
        })
        .collect()
}

const CARDIOID_DENSE: usize = 6000;
/// Smoothing width in parameter units; gives a turning radius at the cusp of
/// roughly 2% of the long axis.
const CARDIOID_SMOOTHING: f64 = 0.36;

fn bbox(points: &[Point2]) -> (Point2, Point2) {
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for p in points {
        for k in 0..2 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    (lo, hi)
}

/// Dense smoothed cardioid `r = 1 - cos θ` (cusp at the origin), scaled so
/// that its longer bounding-box side is `CARDIOID_LONG_AXIS`.
pub(crate) fn smoothed_cardioid_dense() -> Vec<Point2> {
    let m = CARDIOID_DENSE;
    let raw: Vec<Point2> = (0..m)
        .map(|i| {
            let t = 2.0 * PI * i as f64 / m as f64;
            let r = 1.0 - t.cos();
            [r * t.cos(), r * t.sin()]
        })
        .collect();
    let sm = smooth_periodic(&raw, CARDIOID_SMOOTHING * m as f64 / (2.0 * PI));
    let (lo, hi) = bbox(&sm);
    let s = CARDIOID_LONG_AXIS / (hi[0] - lo[0]).max(hi[1] - lo[1]);
    // start at the far end of the lobe
    let start = (0..m).min_by(|&a, &b| sm[a][0].total_cmp(&sm[b][0])).unwrap();
    (0..m).map(|i| sm[(start + i) % m]).map(|p| [s * p[0], s * p[1]]).collect()
}

/// Large smoothed cardioid (template) and a smaller, rotated, offset copy
/// (target), each with 100 equally spaced vertices.
pub fn gen_cardioids() -> CurvePair {
    let dense = smoothed_cardioid_dense();
    let n = CARDIOID_VERTICES;
    let mut template = equal_chord_resample(&dense, n);
    // the bounding box of the resampled polygon sets the long axis exactly
    let (lo, hi) = bbox(&template);
    let s = CARDIOID_LONG_AXIS / (hi[0] - lo[0]).max(hi[1] - lo[1]);
    template.iter_mut().for_each(|p| *p = [s * p[0], s * p[1]]);
    let dense_target: Vec<Point2> = dense.iter().map(|&p| similarity(p, 0.75 * s, 0.3, [-4.0, 0.0], [0.8, 0.6])).collect();
    let target = equal_chord_resample(&dense_target, n);
    CurvePair {
        template: vec![PolygonalCurve::new(template, true).expect("valid cardioid")],
        target: vec![PolygonalCurve::new(target, true).expect("valid cardioid")],
    }
}

fn ellipse(center: Point2, axes: [f64; 2], n: usize) -> PolygonalCurve {
    let dense: Vec<Point2> = (0..4096)
        .map(|i| 2.0 * PI * i as f64 / 4096.0)
        .map(|t| [center[0] + axes[0] * t.cos(), center[1] + axes[1] * t.sin()])
        .collect();
    PolygonalCurve::new(equal_chord_resample(&dense, n), true).expect("valid ellipse")
}

/// Two small ellipses inside a large one; the small ones trade places.
///
/// Each small ellipse travels along its own horizontal lane so that the swap
/// has no symmetric head-on collision.
pub fn gen_nested_ellipses() -> NestedEllipses {
    let (large_n, small_n) = (80, 30);
    let small = [1.0, 0.55];
    let lane = 0.8;
    let template = vec![
        ellipse([0.0, 0.0], [5.0, 3.0], large_n),
        ellipse([-2.4, lane], small, small_n),
        ellipse([2.4, -lane], small, small_n),
    ];
    let target = vec![
        ellipse([0.0, 0.0], [5.2, 2.8], large_n),
        ellipse([-2.4, -lane], [0.9, 0.6], small_n),
        ellipse([2.4, lane], [0.9, 0.6], small_n),
    ];
    NestedEllipses { template, target, pairing: vec![(LARGE, LARGE), (LEFT, RIGHT), (RIGHT, LEFT)] }
}

fn ray(angle: f64, length: f64, origin: Point2, n: usize) -> PolygonalCurve {
    let (s, c) = angle.sin_cos();
    let v = (0..n).map(|i| length * i as f64 / (n - 1) as f64).map(|r| [origin[0] + r * c, origin[1] + r * s]).collect();
    PolygonalCurve::new(v, false).expect("valid ray")
}

/// Vertices per ray.
pub const RAY_VERTICES: usize = 26;

/// Ten segments from a common origin: uniform angles `2kπ/m` in the
/// template, `2π√(k/m)` in the target, which is also shifted by `0.05·L`.
pub fn gen_rays() -> CurveFamily {
    let m = RAY_COUNT;
    let l = RAY_LENGTH;
    let template = (0..m).map(|k| ray(2.0 * PI * k as f64 / m as f64, l, [0.0, 0.0], RAY_VERTICES)).collect();
    let shift = [0.05 * l * (0.3f64).cos(), 0.05 * l * (0.3f64).sin()];
    let target = (0..m).map(|k| ray(2.0 * PI * (k as f64 / m as f64).sqrt(), l, shift, RAY_VERTICES)).collect();
    CurveFamily { template, target, length: l }
}

fn arc(radius: f64, start: f64, n: usize) -> PolygonalCurve {
    let v = (0..n).map(|i| start + PI * i as f64 / (n - 1) as f64).map(|t| [radius * t.cos(), radius * t.sin()]).collect();
    PolygonalCurve::new(v, false).expect("valid arc")
}

/// Concentric half circles of radii `L/4 … L`; the target family is turned
/// by 60° about the common center.
pub fn gen_half_circles() -> CurveFamily {
    let l = HALF_CIRCLE_RADIUS;
    let radii = [0.25, 0.5, 0.75, 1.0].map(|f| f * l);
    let count = |r: f64| (40.0 * r / l).round() as usize + 1;
    let template = radii.iter().map(|&r| arc(r, 0.0, count(r))).collect();
    let target = radii.iter().map(|&r| arc(r, PI / 3.0, count(r))).collect();
    CurveFamily { template, target, length: l }
}

fn ellipsoid(level: u32, center: Point3, axes: Point3, bend: f64) -> TriangleMesh {
    icosphere(level)
        .map(|p| {
            let x = axes[0] * p[0];
            let y = axes[1] * p[1];
            let z = axes[2] * p[2];
            [center[0] + x, center[1] + y + bend * (PI * x).sin(), center[2] + z]
        })
        .expect("valid ellipsoid")
}

/// Three nearby deformed ellipsoids (left, center, right) merged into one
/// mesh, and a target where each has moved and changed shape. Units are the
/// height of the central ellipsoid.
pub fn gen_three_ellipsoids(level: u32) -> SurfacePair {
    let tpl = [
        ellipsoid(level, [-0.95, 0.0, -0.05], [0.3, 0.25, 0.38], 0.05),
        ellipsoid(level, [0.0, 0.0, 0.0], [0.55, 0.3, 0.5], 0.08),
        ellipsoid(level, [0.9, 0.05, 0.1], [0.28, 0.28, 0.3], 0.0),
    ];
    let tgt = [
        ellipsoid(level, [-0.9, 0.1, -0.1], [0.32, 0.22, 0.36], 0.08),
        ellipsoid(level, [0.05, 0.05, 0.02], [0.6, 0.27, 0.46], 0.12),
        ellipsoid(level, [0.8, 0.0, 0.18], [0.3, 0.26, 0.32], 0.03),
    ];
    let z = tpl[1].vertices().iter().map(|p| p[2]);
    let height = z.clone().fold(f64::NEG_INFINITY, f64::max) - z.fold(f64::INFINITY, f64::min);
    let merge = |m: &[TriangleMesh; 3]| {
        m[0].merge(&m[1])
            .and_then(|a| a.merge(&m[2]))
            .and_then(|a| a.map(|p| p.map(|x| x / height)))
            .expect("disjoint ellipsoids")
    };
    SurfacePair { template: merge(&tpl), target: merge(&tgt), height: 1.0 }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curve::curve_frame;
    use crate::solver::{min_component_distance, ShapeState};
    use approx::assert_relative_eq;

    fn edge_cv(c: &PolygonalCurve) -> f64 {
        let l = curve_frame(c).unwrap().edge_lengths;
        let mean = l.iter().sum::<f64>() / l.len() as f64;
        (l.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / l.len() as f64).sqrt() / mean
    }

    fn long_axis(c: &PolygonalCurve) -> f64 {
        let (lo, hi) = bbox(c.vertices());
        (hi[0] - lo[0]).max(hi[1] - lo[1])
    }

    #[test]
    fn cardioids() {
        let pair = gen_cardioids();
        let (t, g) = (&pair.template[0], &pair.target[0]);
        assert!(t.is_closed() && g.is_closed());
        assert_eq!((t.len(), g.len()), (100, 100));
        assert_relative_eq!(long_axis(t), 10.0, max_relative = 1e-14);
        assert!(long_axis(g) < 9.0);
        assert!(edge_cv(t) < 1e-6, "{}", edge_cv(t));
        assert!(edge_cv(g) < 1e-6);
        assert_eq!(gen_cardioids(), pair);
    }

    #[test]
    fn cardioid_cusp_is_rounded_at_two_percent() {
        // smallest radius of curvature along the dense smoothed curve
        let d = smoothed_cardioid_dense();
        let m = d.len();
        let k = 10;
        let mut rmin = f64::INFINITY;
        for i in 0..m {
            let (a, b, c) = (d[(i + m - k) % m], d[i], d[(i + k) % m]);
            let ab = (b[0] - a[0]).hypot(b[1] - a[1]);
            let bc = (c[0] - b[0]).hypot(c[1] - b[1]);
            let ca = (a[0] - c[0]).hypot(a[1] - c[1]);
            let area2 = ((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])).abs();
            if area2 > 0.0 {
                rmin = rmin.min(ab * bc * ca / (2.0 * area2));
            }
        }
        let rel = rmin / CARDIOID_LONG_AXIS;
        assert!((0.015..0.025).contains(&rel), "{rel}");
    }

    #[test]
    fn equal_chords_on_a_circle() {
        let dense: Vec<Point2> = (0..1000).map(|i| 2.0 * PI * i as f64 / 1000.0).map(|t| [t.cos(), t.sin()]).collect();
        let c = PolygonalCurve::new(equal_chord_resample(&dense, 7), true).unwrap();
        assert!(edge_cv(&c) < 1e-12);
        assert_eq!(c.vertices()[0], [1.0, 0.0]);
    }

    #[test]
    fn nested_ellipses() {
        let e = gen_nested_ellipses();
        assert_eq!(e.template.len(), 3);
        assert!(e.template.iter().chain(&e.target).all(|c| c.is_closed()));
        // left template ellipse is paired with the right target ellipse
        assert!(e.pairing.contains(&(LEFT, RIGHT)) && e.pairing.contains(&(RIGHT, LEFT)) && e.pairing.contains(&(LARGE, LARGE)));
        let cx = |c: &PolygonalCurve| c.vertices().iter().map(|p| p[0]).sum::<f64>() / c.len() as f64;
        assert!(cx(&e.template[LEFT]) < 0.0 && cx(&e.template[RIGHT]) > 0.0);
        assert!(cx(&e.target[LEFT]) < 0.0 && cx(&e.target[RIGHT]) > 0.0);
        for set in [&e.template, &e.target] {
            let large = &set[LARGE];
            let (lo, hi) = bbox(large.vertices());
            for small in &set[1..] {
                // inside the large ellipse: normalised radius below 1
                for p in small.vertices() {
                    let a = (hi[0] - lo[0]) / 2.0;
                    let b = (hi[1] - lo[1]) / 2.0;
                    assert!((p[0] / a).powi(2) + (p[1] / b).powi(2) < 0.8);
                }
            }
            let d = min_component_distance(&ShapeState::Curves(set.clone())).unwrap();
            assert!(d > 0.2);
            for c in set {
                assert!(edge_cv(c) < 1e-6);
            }
        }
    }

    #[test]
    fn rays() {
        let r = gen_rays();
        assert_eq!((r.template.len(), r.target.len()), (10, 10));
        assert_eq!(r.length, RAY_LENGTH);
        for (k, c) in r.template.iter().enumerate() {
            let v = c.vertices();
            assert_eq!(v[0], [0.0, 0.0]);
            let ang = v[v.len() - 1][1].atan2(v[v.len() - 1][0]).rem_euclid(2.0 * PI);
            assert_relative_eq!(ang, (2.0 * PI * k as f64 / 10.0).rem_euclid(2.0 * PI), epsilon = 1e-12);
        }
        let v4 = r.target[4].vertices();
        let d = [v4[v4.len() - 1][0] - v4[0][0], v4[v4.len() - 1][1] - v4[0][1]];
        assert_relative_eq!(d[1].atan2(d[0]).rem_euclid(2.0 * PI), 3.9738, epsilon = 1e-4);
        assert_relative_eq!(r.target[0].vertices()[0][0].hypot(r.target[0].vertices()[0][1]), 0.05 * RAY_LENGTH, epsilon = 1e-12);
        for c in r.template.iter().chain(&r.target) {
            let v = c.vertices();
            let (a, b) = (v[0], v[v.len() - 1]);
            for p in v {
                let cross = (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]);
                assert!(cross.abs() < 1e-12);
            }
            assert_relative_eq!(c.length(), RAY_LENGTH, max_relative = 1e-12);
        }
    }

    #[test]
    fn half_circles() {
        let h = gen_half_circles();
        assert_eq!(h.length, HALF_CIRCLE_RADIUS);
        let radius = |c: &PolygonalCurve| c.vertices()[0][0].hypot(c.vertices()[0][1]);
        let rmax = h.template.iter().map(radius).fold(0.0, f64::max);
        assert_relative_eq!(rmax, h.length, max_relative = 1e-15);
        for c in h.template.iter().chain(&h.target) {
            let v = c.vertices();
            let (a, b) = (v[0], v[v.len() - 1]);
            // endpoints diametrically opposite
            assert!((a[0] + b[0]).abs() < 1e-12 && (a[1] + b[1]).abs() < 1e-12);
            let r = radius(c);
            assert!(v.iter().all(|p| (p[0].hypot(p[1]) - r).abs() < 1e-12));
        }
        let mut radii: Vec<f64> = h.template.iter().map(radius).collect();
        radii.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
        assert_eq!(radii.len(), 4);
    }

    #[test]
    fn three_ellipsoids() {
        let s = gen_three_ellipsoids(2);
        assert_eq!(s.template.component_count(), 3);
        assert_eq!(s.target.component_count(), 3);
        let zs = |m: &TriangleMesh, r: std::ops::Range<usize>| {
            let z: Vec<f64> = m.vertices()[r].iter().map(|p| p[2]).collect();
            z.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - z.iter().cloned().fold(f64::INFINITY, f64::min)
        };
        let n = icosphere(2).vertex_count();
        assert_relative_eq!(zs(&s.template, n..2 * n), s.height, max_relative = 1e-12);
        assert!(min_component_distance(&ShapeState::Mesh(s.template.clone())).unwrap() > 0.05);
    }
}
