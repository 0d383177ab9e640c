//! Depth-buffer rasterization: camera transform, near-plane clipping,
//! perspective-correct triangle fill.

use nalgebra::{Matrix4, Point3, Vector3};

use crate::error::Result;
use crate::geometry::TriangleMesh;
use crate::render::RenderConfig;
use crate::scalar::{cast, Scalar};

/// World-to-camera transform for the config's pinhole camera.
pub fn view_matrix<T: Scalar>(cfg: &RenderConfig) -> Matrix4<T> {
    let p3 = |a: [f64; 3]| Point3::new(cast::<T>(a[0]), cast::<T>(a[1]), cast::<T>(a[2]));
    let up = Vector3::new(cast::<T>(cfg.up[0]), cast::<T>(cfg.up[1]), cast::<T>(cfg.up[2]));
    nalgebra::Isometry3::look_at_rh(&p3(cfg.eye), &p3(cfg.target), &up).to_homogeneous()
}

/// Vertex after projection: pixel position and inverse depth.
#[derive(Clone, Copy)]
struct Projected<T> {
    x: T,
    y: T,
    inv_d: T,
}

/// Rasterize the mesh into a row-major depth buffer initialized to `far`.
/// Both triangle windings are filled; the z-test keeps the nearest surface.
pub fn rasterize_depth<T: Scalar>(mesh: &TriangleMesh<T>, cfg: &RenderConfig) -> Result<Vec<T>> {
    let w = cfg.width as usize;
    let h = cfg.height as usize;
    let near = cast::<T>(cfg.near);
    let far = cast::<T>(cfg.far);
    let focal = cast::<T>(cfg.focal_px);
    let cx = cast::<T>(cfg.width as f64 / 2.0);
    let cy = cast::<T>(cfg.height as f64 / 2.0);

    let view = view_matrix::<T>(cfg);
    let cam: Vec<Point3<T>> = mesh.vertices.iter().map(|v| view.transform_point(v)).collect();

    let mut buf = vec![far; w * h];
    let mut poly: Vec<Point3<T>> = Vec::with_capacity(4);
    let mut clipped: Vec<Point3<T>> = Vec::with_capacity(4);
    for f in &mesh.faces {
        poly.clear();
        poly.extend(f.iter().map(|&i| cam[i as usize]));
        clip_near(&poly, near, &mut clipped);
        if clipped.len() < 3 {
            continue;
        }
        let project = |p: &Point3<T>| {
            let d = -p.z;
            Projected { x: cx + focal * p.x / d, y: cy - focal * p.y / d, inv_d: T::one() / d }
        };
        let first = project(&clipped[0]);
        for k in 1..clipped.len() - 1 {
            fill_triangle(
                &mut buf,
                w,
                h,
                near,
                far,
                first,
                project(&clipped[k]),
                project(&clipped[k + 1]),
            );
        }
    }
    Ok(buf)
}

/// Sutherland-Hodgman clip of a camera-space polygon against the near plane
/// (keep z <= -near, i.e. depth >= near).
fn clip_near<T: Scalar>(poly: &[Point3<T>], near: T, out: &mut Vec<Point3<T>>) {
    out.clear();
    let inside = |p: &Point3<T>| -p.z >= near;
    for i in 0..poly.len() {
        let a = poly[i];
        let b = poly[(i + 1) % poly.len()];
        let (ia, ib) = (inside(&a), inside(&b));
        if ia {
            out.push(a);
        }
        if ia != ib {
            // Intersection with depth == near along segment a-b.
            let da = -a.z - near;
            let db = -b.z - near;
            let t = da / (da - db);
            out.push(a + (b - a) * t);
        }
    }
}

fn fill_triangle<T: Scalar>(
    buf: &mut [T],
    w: usize,
    h: usize,
    near: T,
    far: T,
    a: Projected<T>,
    b: Projected<T>,
    c: Projected<T>,
) {
    // Twice the signed area; degenerate (sliver) triangles are skipped.
    let area2 = (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x);
    if area2.abs() <= cast::<T>(1e-12) {
        return;
    }

    let min_x = a.x.min(b.x.min(c.x)).ceil();
    let max_x = a.x.max(b.x.max(c.x)).floor();
    let min_y = a.y.min(b.y.min(c.y)).ceil();
    let max_y = a.y.max(b.y.max(c.y)).floor();
    let to_idx = |v: T, hi: usize| -> Option<usize> {
        let f = crate::scalar::to_f64(v);
        if f < 0.0 {
            Some(0)
        } else if f as usize >= hi {
            None
        } else {
            Some(f as usize)
        }
    };
    let x0 = match to_idx(min_x, w) {
        Some(v) => v,
        None => return,
    };
    let y0 = match to_idx(min_y, h) {
        Some(v) => v,
        None => return,
    };
    let x1 = crate::scalar::to_f64(max_x).min((w - 1) as f64);
    let y1 = crate::scalar::to_f64(max_y).min((h - 1) as f64);
    if x1 < x0 as f64 || y1 < y0 as f64 {
        return;
    }
    let (x1, y1) = (x1 as usize, y1 as usize);

    for py in y0..=y1 {
        let sy = cast::<T>(py as f64);
        for px in x0..=x1 {
            let sx = cast::<T>(px as f64);
            // Barycentric weights relative to the signed area; positive for
            // interior points in either winding after the division.
            let w0 = ((c.x - b.x) * (sy - b.y) - (c.y - b.y) * (sx - b.x)) / area2;
            let w1 = ((a.x - c.x) * (sy - c.y) - (a.y - c.y) * (sx - c.x)) / area2;
            let w2 = T::one() - w0 - w1;
            if w0 < T::zero() || w1 < T::zero() || w2 < T::zero() {
                continue;
            }
            let inv = w0 * a.inv_d + w1 * b.inv_d + w2 * c.inv_d;
            if inv <= T::zero() {
                continue;
            }
            let d = T::one() / inv;
            if d < near || d > far {
                continue;
            }
            let idx = py * w + px;
            if d < buf[idx] {
                buf[idx] = d;
            }
        }
    }
}
