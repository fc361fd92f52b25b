//! Shape, energy-log and control files.
//!
//! Curves use a small JSON document `{"curves": [{"closed": …, "vertices":
//! [[x, y], …]}, …]}`; meshes use OFF. Floats are written in their shortest
//! round-trip decimal form, so reading back reproduces coordinates exactly.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::curve::PolygonalCurve;
use crate::error::{Error, Result};
use crate::mesh::{Point3, TriangleMesh};
use crate::solver::{ControlTrajectory, EnergyRecord, ShapeState};

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CurvesDoc {
    curves: Vec<PolygonalCurve>,
}

fn parse_err(path: &Path, msg: impl ToString) -> Error {
    Error::Parse { path: path.to_path_buf(), msg: msg.to_string() }
}

pub fn curves_to_string(curves: &[PolygonalCurve]) -> String {
    let mut s = serde_json::to_string(&CurvesDoc { curves: curves.to_vec() }).expect("curves serialize");
    s.push('\n');
    s
}

pub fn curves_from_str(text: &str) -> Result<Vec<PolygonalCurve>> {
    Ok(serde_json::from_str::<CurvesDoc>(text)?.curves)
}

pub fn read_curves(path: &Path) -> Result<Vec<PolygonalCurve>> {
    curves_from_str(&fs::read_to_string(path)?).map_err(|e| parse_err(path, e))
}

pub fn write_curves(path: &Path, curves: &[PolygonalCurve]) -> Result<()> {
    fs::write(path, curves_to_string(curves))?;
    Ok(())
}

pub fn off_to_string(mesh: &TriangleMesh) -> String {
    let mut s = String::from("OFF\n");
    writeln!(s, "{} {} 0", mesh.vertex_count(), mesh.triangles().len()).unwrap();
    for v in mesh.vertices() {
        writeln!(s, "{} {} {}", v[0], v[1], v[2]).unwrap();
    }
    for t in mesh.triangles() {
        writeln!(s, "3 {} {} {}", t[0], t[1], t[2]).unwrap();
    }
    s
}

/// Parses OFF text. Comments (`#`) are ignored; polygonal faces are
/// rejected since only triangle meshes are supported.
pub fn off_from_str(text: &str) -> std::result::Result<TriangleMesh, String> {
    let mut tokens = text.lines().map(|l| l.split('#').next().unwrap_or("")).flat_map(str::split_whitespace);
    match tokens.next() {
        Some("OFF") => {}
        other => return Err(format!("expected OFF header, found {other:?}")),
    }
    let mut next_num = |what: &str| -> std::result::Result<&str, String> { tokens.next().ok_or_else(|| format!("unexpected end of file reading {what}")) };
    let count = |s: &str| s.parse::<usize>().map_err(|e| format!("bad count `{s}`: {e}"));
    let nv = count(next_num("vertex count")?)?;
    let nf = count(next_num("face count")?)?;
    count(next_num("edge count")?)?;
    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let mut p: Point3 = [0.0; 3];
        for x in p.iter_mut() {
            let s = next_num("vertex")?;
            *x = s.parse().map_err(|e| format!("bad coordinate `{s}`: {e}"))?;
        }
        vertices.push(p);
    }
    let mut triangles = Vec::with_capacity(nf);
    for f in 0..nf {
        let k = count(next_num("face")?)?;
        if k != 3 {
            return Err(format!("face {f} has {k} vertices; only triangles are supported"));
        }
        let mut t = [0usize; 3];
        for i in t.iter_mut() {
            *i = count(next_num("face")?)?;
        }
        triangles.push(t);
    }
    TriangleMesh::new(vertices, triangles).map_err(|e| e.to_string())
}

pub fn read_off(path: &Path) -> Result<TriangleMesh> {
    off_from_str(&fs::read_to_string(path)?).map_err(|e| parse_err(path, e))
}

pub fn write_off(path: &Path, mesh: &TriangleMesh) -> Result<()> {
    fs::write(path, off_to_string(mesh))?;
    Ok(())
}

/// Reads `.off` as a mesh and anything else as a curves document.
pub fn read_shape(path: &Path) -> Result<ShapeState> {
    if is_off(path) {
        read_off(path).map(ShapeState::Mesh)
    } else {
        read_curves(path).map(ShapeState::Curves)
    }
}

pub fn write_shape(path: &Path, shape: &ShapeState) -> Result<()> {
    match shape {
        ShapeState::Curves(c) => write_curves(path, c),
        ShapeState::Mesh(m) => write_off(path, m),
    }
}

/// File extension used for a shape of this kind.
pub fn shape_extension(shape: &ShapeState) -> &'static str {
    match shape {
        ShapeState::Curves(_) => "curves",
        ShapeState::Mesh(_) => "off",
    }
}

fn is_off(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("off"))
}

pub const ENERGY_HEADER: &str = "iter,kinetic,endpoint,total,grad_norm";

pub fn energy_csv(log: &[EnergyRecord]) -> String {
    let mut s = format!("{ENERGY_HEADER}\n");
    for r in log {
        writeln!(s, "{},{},{},{},{}", r.iteration, r.kinetic, r.endpoint, r.total, r.grad_norm).unwrap();
    }
    s
}

pub fn parse_energy_csv(text: &str) -> std::result::Result<Vec<EnergyRecord>, String> {
    let mut lines = text.lines();
    if lines.next() != Some(ENERGY_HEADER) {
        return Err("missing energy header".into());
    }
    lines
        .filter(|l| !l.is_empty())
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            if f.len() != 5 {
                return Err(format!("expected 5 fields in `{l}`"));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|e| format!("bad number `{s}`: {e}"));
            Ok(EnergyRecord {
                iteration: f[0].parse().map_err(|e| format!("bad iteration `{}`: {e}", f[0]))?,
                kinetic: num(f[1])?,
                endpoint: num(f[2])?,
                total: num(f[3])?,
                grad_norm: num(f[4])?,
            })
        })
        .collect()
}

pub fn write_controls(path: &Path, controls: &ControlTrajectory) -> Result<()> {
    fs::write(path, serde_json::to_string(controls)? + "\n")?;
    Ok(())
}

pub fn read_controls(path: &Path) -> Result<ControlTrajectory> {
    serde_json::from_str(&fs::read_to_string(path)?).map_err(|e| parse_err(path, e))
}
