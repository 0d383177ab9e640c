//! Contour likelihood: exact Euclidean distance transform of the observed
//! contour, a one-directional chamfer statistic over the rendered contour,
//! and a zero-mean Gaussian log density on that statistic.

use crate::error::{Error, Result};
use crate::render::RenderedView;
use crate::scalar::{cast, Scalar};

/// Exact Euclidean distance transform of a binary mask (nonzero = on).
/// Distances are computed with the two-pass separable parabola method on
/// squared distances, which is exact for integer grids, then square-rooted.
pub fn distance_transform<T: Scalar>(mask: &[u8], width: u32, height: u32) -> Result<Vec<T>> {
    let w = width as usize;
    let h = height as usize;
    if mask.len() != w * h {
        return Err(Error::InvalidParameter(format!(
            "mask of {} pixels does not match {w}x{h}",
            mask.len()
        )));
    }
    if !mask.iter().any(|&m| m != 0) {
        return Err(Error::EmptyObservation);
    }

    // Row pass on indicator costs, then column pass on row results.
    let mut sq = vec![f64::INFINITY; w * h];
    for (i, &m) in mask.iter().enumerate() {
        if m != 0 {
            sq[i] = 0.0;
        }
    }
    let mut scratch = ScratchEdt::new(w.max(h));
    let mut line = vec![0.0f64; w.max(h)];
    for y in 0..h {
        line[..w].copy_from_slice(&sq[y * w..(y + 1) * w]);
        scratch.transform(&mut line[..w]);
        sq[y * w..(y + 1) * w].copy_from_slice(&line[..w]);
    }
    for x in 0..w {
        for y in 0..h {
            line[y] = sq[y * w + x];
        }
        scratch.transform(&mut line[..h]);
        for y in 0..h {
            sq[y * w + x] = line[y];
        }
    }
    Ok(sq.into_iter().map(|d| cast(d.sqrt())).collect())
}

/// Lower-envelope-of-parabolas transform along one line, in place.
struct ScratchEdt {
    v: Vec<usize>,
    z: Vec<f64>,
    d: Vec<f64>,
}

impl ScratchEdt {
    fn new(n: usize) -> Self {
        Self { v: vec![0; n], z: vec![0.0; n + 1], d: vec![0.0; n] }
    }

    fn transform(&mut self, f: &mut [f64]) {
        let n = f.len();
        if n == 0 {
            return;
        }
        let (v, z, d) = (&mut self.v, &mut self.z, &mut self.d);
        let mut k = 0usize;
        let mut any = false;
        for q in 0..n {
            if !f[q].is_finite() {
                continue;
            }
            if !any {
                any = true;
                v[0] = q;
                z[0] = f64::NEG_INFINITY;
                z[1] = f64::INFINITY;
                continue;
            }
            let mut s;
            loop {
                let p = v[k];
                s = (f[q] + (q * q) as f64 - f[p] - (p * p) as f64) / (2 * q - 2 * p) as f64;
                if s <= z[k] {
                    if k == 0 {
                        break;
                    }
                    k -= 1;
                } else {
                    break;
                }
            }
            // A parabola strictly below at its own abscissa displaces the
            // previous envelope entry entirely when s <= z[k] at k == 0.
            if s <= z[k] {
                v[k] = q;
                z[k] = f64::NEG_INFINITY;
            } else {
                k += 1;
                v[k] = q;
                z[k] = s;
            }
            z[k + 1] = f64::INFINITY;
        }
        if !any {
            return; // whole line infinite; nothing to resolve
        }
        let mut k = 0usize;
        for q in 0..n {
            while z[k + 1] < q as f64 {
                k += 1;
            }
            let p = v[k];
            d[q] = (q as f64 - p as f64).powi(2) + f[p];
        }
        f.copy_from_slice(&d[..n]);
    }
}

/// Observed contour image with its precomputed distance transform.
#[derive(Debug, Clone)]
pub struct ObservationImage<T> {
    pub width: u32,
    pub height: u32,
    pub contour: Vec<u8>,
    pub dt: Vec<T>,
    pub on_count: usize,
}

impl<T: Scalar> ObservationImage<T> {
    /// Build from a binary contour mask; fails on an empty mask.
    pub fn from_contour(contour: Vec<u8>, width: u32, height: u32) -> Result<Self> {
        let dt = distance_transform(&contour, width, height)?;
        let on_count = contour.iter().filter(|&&m| m != 0).count();
        Ok(Self { width, height, contour, dt, on_count })
    }

    /// Treat a rendered view as the observation (synthetic ground truth).
    pub fn from_view(view: &RenderedView<T>) -> Result<Self> {
        Self::from_contour(view.contour.clone(), view.width, view.height)
    }
}

/// One-directional chamfer statistic: the mean, over the rendered contour's
/// on-pixels, of the observation's distance transform. The rendered image is
/// the template, so the statistic is not symmetric in its arguments.
pub fn chamfer<T: Scalar>(obs: &ObservationImage<T>, view: &RenderedView<T>) -> Result<T> {
    if obs.width != view.width || obs.height != view.height {
        return Err(Error::InvalidParameter(format!(
            "observation {}x{} vs render {}x{}",
            obs.width, obs.height, view.width, view.height
        )));
    }
    if view.on_count == 0 {
        return Err(Error::EmptyRender);
    }
    let mut acc = T::zero();
    for (i, &m) in view.contour.iter().enumerate() {
        if m != 0 {
            acc += obs.dt[i];
        }
    }
    Ok(acc / cast(view.on_count as f64))
}

/// Default chamfer noise scale: 2 px at 128x128, linear in resolution so the
/// tolerance stays a fixed fraction of the image.
pub fn default_sigma0(width: u32, height: u32) -> f64 {
    2.0 * width.max(height) as f64 / 128.0
}

/// Gaussian log density of a chamfer value under noise scale `sigma0`.
pub fn log_likelihood_of_rho<T: Scalar>(rho: T, sigma0: T) -> Result<T> {
    if sigma0 <= T::zero() {
        return Err(Error::InvalidParameter("sigma0 must be positive".into()));
    }
    let half = cast::<T>(0.5);
    let z = rho / sigma0;
    Ok(-half * z * z - sigma0.ln() - half * cast::<T>((2.0 * std::f64::consts::PI).ln()))
}

/// Full image log likelihood of a rendered view against the observation.
pub fn log_likelihood<T: Scalar>(
    obs: &ObservationImage<T>,
    view: &RenderedView<T>,
    sigma0: T,
) -> Result<T> {
    log_likelihood_of_rho(chamfer(obs, view)?, sigma0)
}

#[cfg(test)]
pub(crate) fn brute_force_dt(mask: &[u8], width: u32, height: u32) -> Vec<f64> {
    let w = width as i64;
    let h = height as i64;
    let mut out = vec![f64::INFINITY; mask.len()];
    for y in 0..h {
        for x in 0..w {
            let mut best = i64::MAX;
            for oy in 0..h {
                for ox in 0..w {
                    if mask[(oy * w + ox) as usize] != 0 {
                        let d = (x - ox) * (x - ox) + (y - oy) * (y - oy);
                        best = best.min(d);
                    }
                }
            }
            out[(y * w + x) as usize] = (best as f64).sqrt();
        }
    }
    out
}
