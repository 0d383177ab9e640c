//! Reconstruction quality metrics: shift-invariant depth error, normal
//! error over paired vertices, and projected keypoint error for bodies.

use nalgebra::Point3;

use crate::config::ModelConfig;
use crate::error::{Error, Result};
use crate::geometry::TriangleMesh;
use crate::render::{view_matrix, RenderConfig};
use crate::scalar::{cast, Scalar};
use crate::scene::{body::body_keypoints, ProgramKind, SceneTrace};

/// How the depth offset between two buffers is estimated before averaging.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DepthMetric {
    /// Mean absolute error after removing the lower-median offset.
    MedianShiftMae,
    /// Mean squared error after removing the mean offset.
    MeanShiftMse,
}

/// Pixels covered (depth < far) in both buffers.
pub fn coverage_mask<T: Scalar>(a: &[T], b: &[T], far: T) -> Vec<bool> {
    a.iter().zip(b).map(|(&x, &y)| x < far && y < far).collect()
}

/// Shift-invariant depth error over masked pixels.
///
/// The offset estimator is the lower median (element at index `(n-1)/2` of
/// the sorted differences) for the MAE form, the mean for the MSE form.
pub fn depth_error<T: Scalar>(
    a: &[T],
    b: &[T],
    mask: &[bool],
    metric: DepthMetric,
) -> Result<T> {
    if a.len() != b.len() || a.len() != mask.len() {
        return Err(Error::InvalidParameter(format!(
            "depth buffers of {} and {} pixels with {} mask entries",
            a.len(),
            b.len(),
            mask.len()
        )));
    }
    let mut diffs: Vec<T> = mask
        .iter()
        .zip(a.iter().zip(b))
        .filter(|(m, _)| **m)
        .map(|(_, (&x, &y))| x - y)
        .collect();
    if diffs.is_empty() {
        return Err(Error::NoOverlap);
    }
    let n = cast::<T>(diffs.len() as f64);
    match metric {
        DepthMetric::MedianShiftMae => {
            diffs.sort_by(|x, y| x.partial_cmp(y).expect("finite depths"));
            let c = diffs[(diffs.len() - 1) / 2];
            let mut acc = T::zero();
            for d in &diffs {
                acc += (*d - c).abs();
            }
            Ok(acc / n)
        }
        DepthMetric::MeanShiftMse => {
            let mut c = T::zero();
            for d in &diffs {
                c += *d;
            }
            c /= n;
            let mut acc = T::zero();
            for d in &diffs {
                let e = *d - c;
                acc += e * e;
            }
            Ok(acc / n)
        }
    }
}

/// Depth mean absolute error, invariant to a constant depth shift.
pub fn z_mae<T: Scalar>(a: &[T], b: &[T], mask: &[bool]) -> Result<T> {
    depth_error(a, b, mask, DepthMetric::MedianShiftMae)
}

/// How vertices are paired for the normal error.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Correspondence {
    /// Pair vertex `i` with vertex `i`; requires equal vertex counts.
    ByIndex,
    /// Pair each vertex of the first mesh with its nearest vertex in the
    /// second (exact linear scan).
    NearestVertex,
}

/// Mean squared distance between unit normals of paired vertices; lies in
/// [0, 4] by the triangle inequality on unit vectors.
pub fn normal_mse<T: Scalar>(
    a: &TriangleMesh<T>,
    b: &TriangleMesh<T>,
    corr: Correspondence,
) -> Result<T> {
    if a.vertices.is_empty() || b.vertices.is_empty() {
        return Err(Error::InvalidParameter("normal error of an empty mesh".into()));
    }
    let mut acc = T::zero();
    match corr {
        Correspondence::ByIndex => {
            if a.vertex_count() != b.vertex_count() {
                return Err(Error::InvalidParameter(format!(
                    "{} vs {} vertices for indexed correspondence",
                    a.vertex_count(),
                    b.vertex_count()
                )));
            }
            for (na, nb) in a.normals.iter().zip(&b.normals) {
                acc += (na - nb).norm_squared();
            }
        }
        Correspondence::NearestVertex => {
            for (va, na) in a.vertices.iter().zip(&a.normals) {
                let mut best = usize::MAX;
                let mut best_d = T::from_f64(f64::INFINITY).unwrap();
                for (j, vb) in b.vertices.iter().enumerate() {
                    let d = (va - vb).norm_squared();
                    if d < best_d {
                        best_d = d;
                        best = j;
                    }
                }
                acc += (na - b.normals[best]).norm_squared();
            }
        }
    }
    Ok(acc / cast(a.vertex_count() as f64))
}

/// Projected keypoint error between two body traces.
#[derive(Debug, Clone, PartialEq)]
pub struct KeypointError<T> {
    /// Mean pixel distance over keypoints visible in both scenes.
    pub mean_px: T,
    /// Keypoints skipped because they project behind the near plane.
    pub excluded: usize,
    /// Keypoints included in the mean.
    pub included: usize,
}

/// Mean image-plane distance between corresponding joint heads of two body
/// traces. Joints behind the camera in either trace are excluded from the
/// mean and counted.
pub fn keypoint_error<T: Scalar>(
    a: &SceneTrace<T>,
    b: &SceneTrace<T>,
    model: &ModelConfig,
    render: &RenderConfig,
) -> Result<KeypointError<T>> {
    if a.program() != ProgramKind::Body || b.program() != ProgramKind::Body {
        return Err(Error::InvalidParameter("keypoint error needs body traces".into()));
    }
    let ka = body_keypoints(a, model)?;
    let kb = body_keypoints(b, model)?;
    debug_assert_eq!(ka.len(), kb.len());
    let view = view_matrix::<T>(render);
    let focal = cast::<T>(render.focal_px);
    let near = cast::<T>(render.near);
    let cx = cast::<T>(render.width as f64 / 2.0);
    let cy = cast::<T>(render.height as f64 / 2.0);
    let project = |p: &Point3<T>| {
        let c = view.transform_point(p);
        let d = -c.z;
        if d <= near {
            None
        } else {
            Some((cx + focal * c.x / d, cy - focal * c.y / d))
        }
    };
    let mut acc = T::zero();
    let mut included = 0usize;
    let mut excluded = 0usize;
    for (pa, pb) in ka.iter().zip(&kb) {
        match (project(pa), project(pb)) {
            (Some((ua, va)), Some((ub, vb))) => {
                let (du, dv) = (ua - ub, va - vb);
                acc += (du * du + dv * dv).sqrt();
                included += 1;
            }
            _ => excluded += 1,
        }
    }
    if included == 0 {
        return Err(Error::NoOverlap);
    }
    Ok(KeypointError { mean_px: acc / cast(included as f64), excluded, included })
}

/// First iteration at which the running score reaches `threshold`.
pub fn iteration_to_threshold<T: Scalar>(scores: &[(u64, T)], threshold: T) -> Option<u64> {
    scores.iter().find(|(_, s)| *s >= threshold).map(|(i, _)| *i)
}

/// Median of a sample; lower median for even sizes. Returns `None` on empty
/// input. Used when aggregating per-scene results.
pub fn lower_median<T: Scalar>(values: &[T]) -> Option<T> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(|x, y| x.partial_cmp(y).expect("comparable values"));
    Some(v[(v.len() - 1) / 2])
}

/// Quantile by nearest-rank on the sorted sample (q in [0, 1]).
pub fn quantile<T: Scalar>(values: &[T], q: f64) -> Option<T> {
    if values.is_empty() || !(0.0..=1.0).contains(&q) {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(|x, y| x.partial_cmp(y).expect("comparable values"));
    let rank = ((q * v.len() as f64).ceil() as usize).clamp(1, v.len());
    Some(v[rank - 1])
}

/// Fraction of the covered depth range `[near, far]`, for tolerance checks.
pub fn depth_extent(render: &RenderConfig) -> f64 {
    render.far - render.near
}

/// Bookkeeping for one chain of a run.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct ChainSummary {
    pub chain: usize,
    pub iterations: u64,
    /// Accepted counts per kernel, ordered single/block/data/hmc.
    pub accepts: [u64; 4],
    pub attempts: [u64; 4],
    pub final_log_posterior: f64,
    pub best_log_posterior: f64,
}

/// Evaluation of a finished run against ground truth. Depth and normal
/// errors compare the MAP render/mesh; the keypoint error applies to body
/// programs only.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct EvalReport {
    pub program: String,
    pub z_mae: f64,
    pub n_mse: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub keypoint_err: Option<f64>,
    pub chains: Vec<ChainSummary>,
}

impl EvalReport {
    /// Error fields must be finite and non-negative.
    pub fn validate(&self) -> Result<()> {
        let mut checks = vec![("z_mae", self.z_mae), ("n_mse", self.n_mse)];
        if let Some(k) = self.keypoint_err {
            checks.push(("keypoint_err", k));
        }
        for (name, v) in checks {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidParameter(format!("{name} = {v} out of range")));
            }
        }
        Ok(())
    }
}
