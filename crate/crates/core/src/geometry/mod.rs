//! Triangle meshes and the two constructive pipelines that produce them:
//! surfaces of revolution (lathe) and capsule skeletons deformed by an
//! armature.

pub mod armature;
pub mod lathe;

use std::collections::HashMap;

use nalgebra::{Matrix4, Point3, Vector3};

use crate::error::{Error, Result};
use crate::scalar::{cast, Scalar};

/// Indexed triangle mesh with per-vertex unit normals. `vertex_groups[j]`
/// lists the vertices bound to joint `j` when the mesh is skinned.
#[derive(Debug, Clone)]
pub struct TriangleMesh<T: Scalar> {
    pub vertices: Vec<Point3<T>>,
    pub faces: Vec<[u32; 3]>,
    pub normals: Vec<Vector3<T>>,
    pub vertex_groups: Option<Vec<Vec<u32>>>,
}

impl<T: Scalar> TriangleMesh<T> {
    /// Build a mesh, validating indices and computing vertex normals.
    pub fn new(vertices: Vec<Point3<T>>, faces: Vec<[u32; 3]>) -> Result<Self> {
        let n = vertices.len() as u32;
        for f in &faces {
            if f.iter().any(|&i| i >= n) {
                return Err(Error::DegenerateGeometry(format!(
                    "face {f:?} references vertex beyond {n}"
                )));
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(Error::DegenerateGeometry(format!("face {f:?} repeats a vertex")));
            }
        }
        let mut mesh = Self { vertices, faces, normals: Vec::new(), vertex_groups: None };
        mesh.recompute_normals()?;
        Ok(mesh)
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn face_count(&self) -> usize {
        self.faces.len()
    }

    /// Area-weighted vertex normals, normalized to unit length.
    pub fn recompute_normals(&mut self) -> Result<()> {
        let mut acc = vec![Vector3::<T>::zeros(); self.vertices.len()];
        for f in &self.faces {
            let [a, b, c] = f.map(|i| self.vertices[i as usize]);
            let n = (b - a).cross(&(c - a));
            for &i in f {
                acc[i as usize] += n;
            }
        }
        let eps = cast::<T>(1e-30);
        for (i, v) in acc.iter_mut().enumerate() {
            let len = v.norm();
            if len <= eps {
                return Err(Error::DegenerateGeometry(format!(
                    "vertex {i} has a zero accumulated normal"
                )));
            }
            *v /= len;
        }
        self.normals = acc;
        Ok(())
    }

    /// Apply an affine transform. Normals are recomputed from the deformed
    /// geometry, so nonuniform scale is handled correctly.
    pub fn transform(&mut self, m: &Matrix4<T>) -> Result<()> {
        for v in &mut self.vertices {
            *v = m.transform_point(v);
        }
        self.recompute_normals()
    }

    pub fn transformed(mut self, m: &Matrix4<T>) -> Result<Self> {
        self.transform(m)?;
        Ok(self)
    }

    pub fn surface_area(&self) -> T {
        let half = cast::<T>(0.5);
        let mut acc = T::zero();
        for f in &self.faces {
            let [a, b, c] = f.map(|i| self.vertices[i as usize]);
            acc += (b - a).cross(&(c - a)).norm() * half;
        }
        acc
    }

    /// Signed volume via the divergence theorem; positive for closed meshes
    /// with outward-facing triangles.
    pub fn signed_volume(&self) -> T {
        let sixth = cast::<T>(1.0 / 6.0);
        let mut acc = T::zero();
        for f in &self.faces {
            let [a, b, c] = f.map(|i| self.vertices[i as usize]);
            acc += a.coords.dot(&b.coords.cross(&c.coords)) * sixth;
        }
        acc
    }

    /// True when every undirected edge is shared by exactly two faces and
    /// the two incident faces traverse it in opposite directions.
    pub fn is_closed(&self) -> bool {
        // (forward, reverse) traversal counts per undirected edge.
        let mut edges: HashMap<(u32, u32), (u32, u32)> = HashMap::new();
        for f in &self.faces {
            for k in 0..3 {
                let a = f[k];
                let b = f[(k + 1) % 3];
                let e = edges.entry((a.min(b), a.max(b))).or_insert((0, 0));
                if a < b {
                    e.0 += 1;
                } else {
                    e.1 += 1;
                }
            }
        }
        edges.values().all(|&(fwd, rev)| fwd == 1 && rev == 1)
    }

    /// Axis-aligned bounds; `None` for an empty mesh.
    pub fn aabb(&self) -> Option<(Point3<T>, Point3<T>)> {
        let first = *self.vertices.first()?;
        let mut lo = first;
        let mut hi = first;
        for v in &self.vertices {
            for k in 0..3 {
                if v[k] < lo[k] {
                    lo[k] = v[k];
                }
                if v[k] > hi[k] {
                    hi[k] = v[k];
                }
            }
        }
        Some((lo, hi))
    }

    /// Concatenate two meshes, preserving vertex groups when both have them.
    pub fn merge(mut self, other: TriangleMesh<T>) -> Self {
        let offset = self.vertices.len() as u32;
        self.vertices.extend(other.vertices);
        self.normals.extend(other.normals);
        self.faces
            .extend(other.faces.into_iter().map(|f| f.map(|i| i + offset)));
        self.vertex_groups = match (self.vertex_groups.take(), other.vertex_groups) {
            (Some(mut a), Some(b)) => {
                for (slot, verts) in a.iter_mut().zip(b) {
                    slot.extend(verts.into_iter().map(|i| i + offset));
                }
                Some(a)
            }
            _ => None,
        };
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn tetrahedron() -> TriangleMesh<f64> {
        // Regular-ish tetra with outward winding.
        let v = vec![
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(0.0, 1.0, 0.0),
            Point3::new(0.0, 0.0, 1.0),
        ];
        let f = vec![[0, 2, 1], [0, 1, 3], [0, 3, 2], [1, 2, 3]];
        TriangleMesh::new(v, f).unwrap()
    }

    #[test]
    fn tetra_is_closed_with_positive_volume() {
        let m = tetrahedron();
        assert!(m.is_closed());
        assert_relative_eq!(m.signed_volume(), 1.0 / 6.0, epsilon = 1e-12);
    }

    #[test]
    fn open_mesh_detected() {
        let mut m = tetrahedron();
        m.faces.pop();
        assert!(!m.is_closed());
    }

    #[test]
    fn normals_are_unit() {
        let m = tetrahedron();
        for n in &m.normals {
            assert_relative_eq!(n.norm(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn bad_face_index_rejected() {
        let v = vec![Point3::new(0.0_f64, 0.0, 0.0), Point3::new(1.0, 0.0, 0.0)];
        assert!(TriangleMesh::new(v.clone(), vec![[0, 1, 2]]).is_err());
        assert!(TriangleMesh::new(v, vec![[0, 1, 1]]).is_err());
    }

    #[test]
    fn transform_scales_area_and_volume() {
        let mut m = tetrahedron();
        let s = Matrix4::new_scaling(2.0);
        let a0 = m.surface_area();
        let v0 = m.signed_volume();
        m.transform(&s).unwrap();
        assert_relative_eq!(m.surface_area(), a0 * 4.0, epsilon = 1e-12);
        assert_relative_eq!(m.signed_volume(), v0 * 8.0, epsilon = 1e-12);
    }

    #[test]
    fn merge_offsets_faces() {
        let a = tetrahedron();
        let b = tetrahedron();
        let m = a.merge(b);
        assert_eq!(m.vertex_count(), 8);
        assert_eq!(m.face_count(), 8);
        assert!(m.is_closed());
        assert_relative_eq!(m.signed_volume(), 2.0 / 6.0, epsilon = 1e-12);
    }
}
