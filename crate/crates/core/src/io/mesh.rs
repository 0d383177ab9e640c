//! Wavefront OBJ subset: `v`, `vn`, and triangular `f` records. Coordinates
//! print in shortest-exact decimal form, so geometry round-trips bit for bit.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::{Point3, Vector3};

use crate::error::{Error, Result};
use crate::geometry::TriangleMesh;
use crate::scalar::{cast, to_f64, Scalar};

pub fn write_obj<T: Scalar>(path: &Path, mesh: &TriangleMesh<T>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for v in &mesh.vertices {
        writeln!(w, "v {} {} {}", to_f64(v.x), to_f64(v.y), to_f64(v.z))?;
    }
    for n in &mesh.normals {
        writeln!(w, "vn {} {} {}", to_f64(n.x), to_f64(n.y), to_f64(n.z))?;
    }
    for f in &mesh.faces {
        writeln!(
            w,
            "f {}//{} {}//{} {}//{}",
            f[0] + 1,
            f[0] + 1,
            f[1] + 1,
            f[1] + 1,
            f[2] + 1,
            f[2] + 1
        )?;
    }
    Ok(())
}

fn parse_coord(tok: &str) -> Result<f64> {
    tok.parse()
        .map_err(|_| Error::Format(format!("bad obj coordinate {tok:?}")))
}

/// Vertex index from an `f` field: `a`, `a/b`, `a//c`, or `a/b/c`.
fn parse_face_index(tok: &str, n_vertices: usize) -> Result<u32> {
    let first = tok.split('/').next().unwrap_or("");
    let idx: i64 = first
        .parse()
        .map_err(|_| Error::Format(format!("bad obj face index {tok:?}")))?;
    if idx < 1 || idx as usize > n_vertices {
        return Err(Error::Format(format!(
            "obj face index {idx} outside 1..={n_vertices}"
        )));
    }
    Ok((idx - 1) as u32)
}

pub fn read_obj<T: Scalar>(path: &Path) -> Result<TriangleMesh<T>> {
    let reader = BufReader::new(File::open(path)?);
    let mut vertices: Vec<Point3<T>> = Vec::new();
    let mut normals: Vec<Vector3<T>> = Vec::new();
    let mut faces: Vec<[u32; 3]> = Vec::new();
    for line in reader.lines() {
        let line = line?;
        let mut parts = line.split_whitespace();
        match parts.next() {
            Some("v") => {
                let mut c = [0.0f64; 3];
                for v in &mut c {
                    *v = parse_coord(
                        parts.next().ok_or_else(|| Error::Format("short v record".into()))?,
                    )?;
                }
                vertices.push(Point3::new(cast(c[0]), cast(c[1]), cast(c[2])));
            }
            Some("vn") => {
                let mut c = [0.0f64; 3];
                for v in &mut c {
                    *v = parse_coord(
                        parts.next().ok_or_else(|| Error::Format("short vn record".into()))?,
                    )?;
                }
                normals.push(Vector3::new(cast(c[0]), cast(c[1]), cast(c[2])));
            }
            Some("f") => {
                let idx: Vec<u32> = parts
                    .map(|tok| parse_face_index(tok, vertices.len()))
                    .collect::<Result<_>>()?;
                if idx.len() != 3 {
                    return Err(Error::Format(format!(
                        "non-triangular face with {} vertices",
                        idx.len()
                    )));
                }
                faces.push([idx[0], idx[1], idx[2]]);
            }
            // Comments, empty lines, and unsupported records are skipped.
            _ => {}
        }
    }
    let mut mesh = TriangleMesh::new(vertices, faces)?;
    if normals.len() == mesh.vertices.len() {
        mesh.normals = normals;
    }
    Ok(mesh)
}
