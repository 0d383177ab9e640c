//! Surfaces of revolution: the lathe that turns radius profiles into closed
//! meshes, plus the capsule primitive used for armature bones.

use nalgebra::{Point3, Rotation3, Unit, Vector3};

use crate::error::{Error, Result};
use crate::geometry::TriangleMesh;
use crate::scalar::{cast, Scalar};

/// Revolve a radius profile around the vertical axis.
///
/// `heights[i]` is the y coordinate of ring `i` (strictly increasing) and
/// `radii[i]` its radius (strictly positive). The surface is closed with
/// flat cap fans at both ends. At least two rings are required; a single
/// ring would collapse to a zero-thickness disc.
pub fn surface_of_revolution<T: Scalar>(
    heights: &[T],
    radii: &[T],
    segments: u32,
) -> Result<TriangleMesh<T>> {
    if heights.len() != radii.len() {
        return Err(Error::InvalidProfile(format!(
            "{} heights vs {} radii",
            heights.len(),
            radii.len()
        )));
    }
    if heights.len() < 2 {
        return Err(Error::InvalidProfile("profile needs at least 2 rings".into()));
    }
    if segments < 3 {
        return Err(Error::InvalidParameter("lathe needs at least 3 segments".into()));
    }
    for w in heights.windows(2) {
        if w[1] <= w[0] {
            return Err(Error::InvalidProfile("ring heights must strictly increase".into()));
        }
    }
    if let Some(i) = radii.iter().position(|&r| r <= T::zero()) {
        return Err(Error::InvalidProfile(format!("ring {i} has non-positive radius")));
    }

    let n = heights.len();
    let m = segments as usize;
    let mut vertices = Vec::with_capacity(n * m + 2);
    for (h, r) in heights.iter().zip(radii) {
        for j in 0..m {
            let theta = cast::<T>(2.0 * std::f64::consts::PI * j as f64 / m as f64);
            vertices.push(Point3::new(*r * theta.cos(), *h, *r * theta.sin()));
        }
    }
    let bottom = vertices.len() as u32;
    vertices.push(Point3::new(T::zero(), heights[0], T::zero()));
    let top = vertices.len() as u32;
    vertices.push(Point3::new(T::zero(), heights[n - 1], T::zero()));

    let ring = |k: usize, j: usize| (k * m + (j % m)) as u32;
    let mut faces = Vec::with_capacity(2 * m * n);
    // Lateral quads, wound so normals point radially outward.
    for k in 0..n.saturating_sub(1) {
        for j in 0..m {
            let a = ring(k, j);
            let b = ring(k, j + 1);
            let c = ring(k + 1, j + 1);
            let d = ring(k + 1, j);
            faces.push([a, c, b]);
            faces.push([a, d, c]);
        }
    }
    // Cap fans: bottom faces -y, top faces +y.
    for j in 0..m {
        faces.push([bottom, ring(0, j), ring(0, j + 1)]);
        faces.push([top, ring(n - 1, j + 1), ring(n - 1, j)]);
    }

    TriangleMesh::new(vertices, faces)
}

/// Capsule from `p0` to `p1`: a cylinder with tessellated hemispherical
/// caps, built as a surface of revolution and rotated onto the segment.
pub fn capsule<T: Scalar>(
    p0: Point3<T>,
    p1: Point3<T>,
    radius: T,
    segments: u32,
    cap_rings: u32,
) -> Result<TriangleMesh<T>> {
    if radius <= T::zero() {
        return Err(Error::InvalidParameter("capsule radius must be positive".into()));
    }
    if cap_rings == 0 {
        return Err(Error::InvalidParameter("capsule needs at least one cap ring".into()));
    }
    let axis = p1 - p0;
    let len = axis.norm();
    if len <= cast::<T>(1e-12) {
        return Err(Error::DegenerateGeometry("zero-length capsule axis".into()));
    }

    let mut heights = Vec::new();
    let mut radii = Vec::new();
    let half_pi = cast::<T>(std::f64::consts::FRAC_PI_2);
    // Bottom hemisphere (pole itself becomes the cap fan), then the top
    // mirrored; ring angles step from near the pole to the equator.
    for i in 1..=cap_rings {
        let alpha = half_pi * cast::<T>(i as f64 / cap_rings as f64);
        heights.push(-radius * alpha.cos());
        radii.push(radius * alpha.sin());
    }
    for i in (1..=cap_rings).rev() {
        let alpha = half_pi * cast::<T>(i as f64 / cap_rings as f64);
        heights.push(len + radius * alpha.cos());
        radii.push(radius * alpha.sin());
    }

    let mesh = surface_of_revolution(&heights, &radii, segments)?;
    let dir = Unit::new_normalize(axis);
    let rot = Rotation3::rotation_between(&Vector3::y(), &dir)
        .unwrap_or_else(|| Rotation3::from_axis_angle(&Vector3::x_axis(), cast(std::f64::consts::PI)));
    let mut m = rot.to_homogeneous();
    m[(0, 3)] = p0.x;
    m[(1, 3)] = p0.y;
    m[(2, 3)] = p0.z;
    mesh.transformed(&m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn cylinder_area_matches_analytic() {
        // 2 pi r h + 2 pi r^2, within tessellation error at 96 segments.
        let r = 0.8_f64;
        let h = 2.5;
        let m = surface_of_revolution(&[0.0, h], &[r, r], 96).unwrap();
        let analytic = 2.0 * std::f64::consts::PI * r * h + 2.0 * std::f64::consts::PI * r * r;
        let rel = (m.surface_area() - analytic).abs() / analytic;
        assert!(rel < 0.01, "relative error {rel}");
        assert!(m.is_closed());
        assert!(m.signed_volume() > 0.0);
    }

    #[test]
    fn lathe_is_closed_for_varied_profiles() {
        let cases: Vec<(Vec<f64>, Vec<f64>)> = vec![
            (vec![0.0, 1.0], vec![0.3, 0.7]),
            (vec![0.0, 0.5, 1.2, 2.0], vec![0.4, 0.9, 0.2, 0.6]),
        ];
        for (h, r) in cases {
            let m = surface_of_revolution(&h, &r, 12).unwrap();
            assert!(m.is_closed(), "open mesh for {} rings", h.len());
        }
    }

    #[test]
    fn invalid_profiles_rejected() {
        assert!(surface_of_revolution::<f64>(&[], &[], 12).is_err());
        assert!(surface_of_revolution(&[0.0], &[0.5], 12).is_err());
        assert!(surface_of_revolution(&[0.0, 0.0], &[0.5, 0.5], 12).is_err());
        assert!(surface_of_revolution(&[1.0, 0.0], &[0.5, 0.5], 12).is_err());
        assert!(surface_of_revolution(&[0.0, 1.0], &[0.5, 0.0], 12).is_err());
        assert!(surface_of_revolution(&[0.0, 1.0], &[0.5], 12).is_err());
        assert!(surface_of_revolution(&[0.0, 1.0], &[0.5, 0.5], 2).is_err());
    }

    #[test]
    fn capsule_is_closed_and_spans_segment() {
        let p0 = Point3::new(0.2_f64, -0.1, 0.4);
        let p1 = Point3::new(1.0, 2.0, -0.3);
        let r = 0.25;
        let m = capsule(p0, p1, r, 12, 4).unwrap();
        assert!(m.is_closed());
        assert!(m.signed_volume() > 0.0);
        let (lo, hi) = m.aabb().unwrap();
        for k in 0..3 {
            assert!(lo[k] <= p0[k].min(p1[k]) - 0.5 * r);
            assert!(hi[k] >= p0[k].max(p1[k]) + 0.5 * r);
        }
    }

    #[test]
    fn capsule_handles_downward_axis() {
        // Antiparallel to +y exercises the rotation fallback.
        let m = capsule(Point3::new(0.0_f64, 0.0, 0.0), Point3::new(0.0, -1.0, 0.0), 0.2, 10, 3)
            .unwrap();
        assert!(m.is_closed());
        // Pole caps are flat fans at the first tessellated ring, so the
        // extent reaches r cos(pi/6) with 3 cap rings, not the full radius.
        let pole = 0.2 * (std::f64::consts::FRAC_PI_6).cos();
        let (lo, hi) = m.aabb().unwrap();
        assert_relative_eq!(hi.y, pole, epsilon = 1e-9);
        assert_relative_eq!(lo.y, -1.0 - pole, epsilon = 1e-9);
    }

    #[test]
    fn zero_length_capsule_rejected() {
        let p = Point3::new(0.0_f64, 0.0, 0.0);
        assert!(matches!(capsule(p, p, 0.2, 8, 3), Err(Error::DegenerateGeometry(_))));
    }
}
