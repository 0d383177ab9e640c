//! Approximate renderer: a deterministic software rasterizer producing a
//! depth buffer, plus contour extraction. This is the `g` in the likelihood;
//! it favors exact reproducibility over speed.

mod raster;

pub use raster::{rasterize_depth, view_matrix};

use serde::{Deserialize, Serialize};

use crate::config::ModelConfig;
use crate::error::Result;
use crate::geometry::TriangleMesh;
use crate::scalar::{cast, Scalar};
use crate::scene::{body::build_body_mesh, object::build_object_mesh, ProgramKind, SceneTrace};

/// Camera and contour parameters. Plain `f64` data; generic code casts on
/// use. The camera is a pinhole at `eye` looking at `target`, pixel sample
/// points at integer coordinates with the principal point at (w/2, h/2).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RenderConfig {
    pub width: u32,
    pub height: u32,
    pub focal_px: f64,
    pub eye: [f64; 3],
    pub target: [f64; 3],
    pub up: [f64; 3],
    pub near: f64,
    pub far: f64,
    /// Depth-step size (world units) that turns an interior pixel into a
    /// contour pixel; infinity yields silhouettes only.
    pub contour_threshold: f64,
}

impl Default for RenderConfig {
    fn default() -> Self {
        Self {
            width: 128,
            height: 128,
            focal_px: 110.0,
            eye: [0.0, 0.0, 7.5],
            target: [0.0, 0.0, 0.0],
            up: [0.0, 1.0, 0.0],
            near: 1.0,
            far: 20.0,
            contour_threshold: 0.02 * 19.0,
        }
    }
}

impl RenderConfig {
    pub fn with_size(mut self, width: u32, height: u32) -> Self {
        // Focal length and likelihood widths scale with resolution.
        self.focal_px *= width as f64 / self.width as f64;
        self.width = width;
        self.height = height;
        self
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }
}

/// Depth buffer plus extracted contour mask.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderedView<T> {
    pub width: u32,
    pub height: u32,
    /// Row-major depth along the view axis; `far` where nothing was hit.
    pub depth: Vec<T>,
    /// 1 where the pixel is on the contour, 0 elsewhere.
    pub contour: Vec<u8>,
    pub on_count: usize,
}

impl<T: Scalar> RenderedView<T> {
    pub fn covered(&self, idx: usize, far: T) -> bool {
        self.depth[idx] < far
    }
}

/// Mark contour pixels: a covered pixel whose 4-neighborhood crosses the
/// silhouette or jumps in depth by more than `threshold`. Neighbors outside
/// the image do not count as crossings.
pub fn extract_contours<T: Scalar>(
    depth: &[T],
    width: u32,
    height: u32,
    far: T,
    threshold: T,
) -> (Vec<u8>, usize) {
    let w = width as i64;
    let h = height as i64;
    debug_assert_eq!(depth.len(), (w * h) as usize);
    let mut mask = vec![0u8; depth.len()];
    let mut on = 0usize;
    for y in 0..h {
        for x in 0..w {
            let idx = (y * w + x) as usize;
            let d = depth[idx];
            if d >= far {
                continue;
            }
            let mut edge = false;
            for (dx, dy) in [(-1i64, 0i64), (1, 0), (0, -1), (0, 1)] {
                let (nx, ny) = (x + dx, y + dy);
                if nx < 0 || ny < 0 || nx >= w || ny >= h {
                    continue;
                }
                let nd = depth[(ny * w + nx) as usize];
                if nd >= far || (nd - d).abs() > threshold {
                    edge = true;
                    break;
                }
            }
            if edge {
                mask[idx] = 1;
                on += 1;
            }
        }
    }
    (mask, on)
}

/// Rasterize a mesh and extract its contour.
pub fn render_mesh<T: Scalar>(mesh: &TriangleMesh<T>, cfg: &RenderConfig) -> Result<RenderedView<T>> {
    let depth = rasterize_depth(mesh, cfg)?;
    let (contour, on_count) =
        extract_contours(&depth, cfg.width, cfg.height, cast(cfg.far), cast(cfg.contour_threshold));
    Ok(RenderedView { width: cfg.width, height: cfg.height, depth, contour, on_count })
}

/// Build the trace's mesh and render it, reusing the trace's cache when the
/// latents have not changed since the last call.
pub fn render_trace<'a, T: Scalar>(
    trace: &'a mut SceneTrace<T>,
    model: &ModelConfig,
    cfg: &RenderConfig,
) -> Result<&'a RenderedView<T>> {
    if trace.cached_render.is_none() {
        let mesh = match trace.program() {
            ProgramKind::Object => build_object_mesh(trace, model)?,
            ProgramKind::Body => build_body_mesh(trace, model)?,
        };
        trace.cached_render = Some(render_mesh(&mesh, cfg)?);
    }
    Ok(trace.cached_render.as_ref().expect("just populated"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::lathe::surface_of_revolution;
    use approx::assert_relative_eq;
    use nalgebra::Point3;

    /// Quad in the z = `z` plane spanning [-hx, hx] x [-hy, hy].
    fn quad(z: f64, hx: f64, hy: f64) -> TriangleMesh<f64> {
        let v = vec![
            Point3::new(-hx, -hy, z),
            Point3::new(hx, -hy, z),
            Point3::new(hx, hy, z),
            Point3::new(-hx, hy, z),
        ];
        TriangleMesh::new(v, vec![[0, 1, 2], [0, 2, 3]]).unwrap()
    }

    fn sphere(r: f64, rings: usize, segments: u32) -> TriangleMesh<f64> {
        let mut heights = Vec::new();
        let mut radii = Vec::new();
        for i in 1..=rings {
            let phi = -std::f64::consts::FRAC_PI_2
                + std::f64::consts::PI * i as f64 / (rings + 1) as f64;
            heights.push(r * phi.sin());
            radii.push(r * phi.cos());
        }
        surface_of_revolution(&heights, &radii, segments).unwrap()
    }

    #[test]
    fn frontal_plane_has_constant_depth() {
        let cfg = RenderConfig::default();
        let view = render_mesh(&quad(0.0, 1.0, 1.0), &cfg).unwrap();
        let center = (64 * 128 + 64) as usize;
        assert_relative_eq!(view.depth[center], 7.5, epsilon = 1e-9);
        let covered: Vec<f64> = view
            .depth
            .iter()
            .copied()
            .filter(|&d| d < cfg.far)
            .collect();
        assert!(!covered.is_empty());
        for d in covered {
            assert_relative_eq!(d, 7.5, epsilon = 1e-9);
        }
    }

    #[test]
    fn projected_size_scales_with_inverse_depth() {
        let cfg = RenderConfig::default();
        let near_view = render_mesh(&quad(2.0, 1.0, 1.0), &cfg).unwrap();
        let far_view = render_mesh(&quad(-2.0, 1.0, 1.0), &cfg).unwrap();
        let count = |v: &RenderedView<f64>| {
            v.depth.iter().filter(|&&d| d < cfg.far).count() as f64
        };
        // Expected pixel-count ratio: (9.5 / 5.5)^2.
        let ratio = count(&near_view) / count(&far_view);
        let expect = (9.5_f64 / 5.5).powi(2);
        assert!((ratio / expect - 1.0).abs() < 0.1, "ratio {ratio} expect {expect}");
    }

    #[test]
    fn nearer_surface_occludes() {
        let cfg = RenderConfig::default();
        let mesh = quad(0.0, 1.0, 1.0).merge(quad(2.0, 0.3, 0.3));
        let view = render_mesh(&mesh, &cfg).unwrap();
        let center = (64 * 128 + 64) as usize;
        assert_relative_eq!(view.depth[center], 5.5, epsilon = 1e-9);
    }

    #[test]
    fn sphere_center_depth_matches_analytic() {
        let cfg = RenderConfig::default();
        let r = 1.0;
        let view = render_mesh(&sphere(r, 96, 96), &cfg).unwrap();
        let center = (64 * 128 + 64) as usize;
        let expect = 7.5 - r;
        let err = (view.depth[center] - expect).abs();
        assert!(err < 1e-3 * 7.5, "center depth error {err}");
    }

    #[test]
    fn contour_is_boundary_only_for_flat_quad() {
        let cfg = RenderConfig::default();
        let view = render_mesh(&quad(0.0, 1.0, 1.0), &cfg).unwrap();
        assert!(view.on_count > 0);
        for y in 0..128u32 {
            for x in 0..128u32 {
                let idx = (y * 128 + x) as usize;
                if view.contour[idx] == 1 {
                    assert!(view.depth[idx] < cfg.far, "contour off the surface");
                }
            }
        }
        // Interior pixel: covered, all neighbors covered at equal depth.
        let center = (64 * 128 + 64) as usize;
        assert_eq!(view.contour[center], 0);
        // The covered region's outermost pixels are on the contour.
        let covered: usize = view.depth.iter().filter(|&&d| d < cfg.far).count();
        assert!(view.on_count < covered, "contour should be a strict subset");
    }

    #[test]
    fn depth_step_creates_interior_contour() {
        let cfg = RenderConfig::default();
        let mesh = quad(0.0, 1.0, 1.0).merge(quad(2.0, 0.3, 0.3));
        let view = render_mesh(&mesh, &cfg).unwrap();
        let (sil, _) = extract_contours(&view.depth, 128, 128, cfg.far, f64::INFINITY);
        // The 2-unit step between the quads marks contour pixels that are
        // strictly interior to the union silhouette: every neighbor covered.
        let mut interior_steps = 0;
        for y in 1..127usize {
            for x in 1..127usize {
                let idx = y * 128 + x;
                let surrounded = [idx - 1, idx + 1, idx - 128, idx + 128]
                    .iter()
                    .all(|&n| view.depth[n] < cfg.far);
                if view.contour[idx] == 1 && surrounded {
                    interior_steps += 1;
                    // Silhouette-only extraction must not mark these.
                    assert_eq!(sil[idx], 0, "interior step pixel ({x},{y}) in silhouette");
                }
            }
        }
        assert!(interior_steps > 10, "found only {interior_steps} step pixels");
    }

    #[test]
    fn behind_camera_geometry_is_clipped() {
        let cfg = RenderConfig::default();
        // Entirely behind the near plane.
        let view = render_mesh(&quad(7.0, 1.0, 1.0), &cfg).unwrap();
        assert_eq!(view.on_count, 0);
        assert!(view.depth.iter().all(|&d| d == cfg.far));
        // Straddling the near plane: must not panic, and only the visible
        // part may draw.
        let v = vec![
            Point3::new(0.0, -0.5, 8.0),
            Point3::new(0.0, 0.5, 8.0),
            Point3::new(0.0, 0.0, 0.0),
        ];
        let straddle = TriangleMesh::new(v, vec![[0, 1, 2]]).unwrap();
        let view = render_mesh(&straddle, &cfg).unwrap();
        for &d in &view.depth {
            assert!(d >= cfg.near, "depth {d} in front of near plane");
        }
    }

    #[test]
    fn render_is_deterministic() {
        let cfg = RenderConfig::default();
        let a = render_mesh(&sphere(0.8, 24, 24), &cfg).unwrap();
        let b = render_mesh(&sphere(0.8, 24, 24), &cfg).unwrap();
        assert_eq!(a.depth, b.depth);
        assert_eq!(a.contour, b.contour);
    }

    #[test]
    fn off_screen_mesh_renders_empty() {
        let cfg = RenderConfig::default();
        let view = render_mesh(&quad(-100.0, 1.0, 1.0), &cfg).unwrap();
        assert_eq!(view.on_count, 0);
    }

    #[test]
    fn with_size_rescales_focal() {
        let cfg = RenderConfig::default().with_size(256, 256);
        assert_relative_eq!(cfg.focal_px, 220.0);
        let view = render_mesh(&quad(0.0, 1.0, 1.0), &cfg).unwrap();
        assert_eq!(view.depth.len(), 256 * 256);
        let center = (128 * 256 + 128) as usize;
        assert_relative_eq!(view.depth[center], 7.5, epsilon = 1e-9);
    }
}
