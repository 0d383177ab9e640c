//! Learned bottom-up proposals: a dataset of (contour features, latents)
//! pairs drawn from the prior, an exact nearest-neighbor lookup, and a
//! kernel density estimate over the neighbors' latents that serves as an
//! independence proposal with tractable forward and reverse densities.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::ModelConfig;
use crate::error::{Error, Result};
use crate::likelihood::distance_transform;
use crate::render::{render_trace, RenderConfig};
use crate::scalar::{cast, to_f64, Scalar};
use crate::scene::{body::sample_body_prior, object::sample_object_prior, ProgramKind, SceneTrace};

/// Layout of the pooled contour feature vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FeatureSpec {
    /// Pooling grid is `grid x grid` cells over the image.
    pub grid: u32,
    pub width: u32,
    pub height: u32,
}

impl FeatureSpec {
    pub fn dim(&self) -> usize {
        (self.grid * self.grid) as usize
    }
}

pub const DEFAULT_FEATURE_GRID: u32 = 8;

/// Pooled distance-transform features of a contour image: the mean of the
/// exact distance transform over each grid cell, normalized by the image
/// diagonal. Scale-free and fixed-length regardless of resolution.
pub fn contour_features<T: Scalar>(contour: &[u8], spec: &FeatureSpec) -> Result<Vec<T>> {
    let w = spec.width as usize;
    let h = spec.height as usize;
    let g = spec.grid as usize;
    if g == 0 || g > w || g > h {
        return Err(Error::InvalidParameter(format!(
            "feature grid {g} incompatible with {w}x{h} image"
        )));
    }
    let dt: Vec<T> = distance_transform(contour, spec.width, spec.height)?;
    let diag = cast::<T>(((w * w + h * h) as f64).sqrt());
    let mut out = Vec::with_capacity(g * g);
    for gy in 0..g {
        let y0 = gy * h / g;
        let y1 = (gy + 1) * h / g;
        for gx in 0..g {
            let x0 = gx * w / g;
            let x1 = (gx + 1) * w / g;
            let mut acc = T::zero();
            for y in y0..y1 {
                for x in x0..x1 {
                    acc += dt[y * w + x];
                }
            }
            let count = cast::<T>(((y1 - y0) * (x1 - x0)) as f64);
            out.push(acc / count / diag);
        }
    }
    Ok(out)
}

/// Flat-array dataset of prior samples: features and flattened continuous
/// latents, both row-major. Every entry has the same dimensions, so the
/// latent rows are directly comparable across entries.
#[derive(Debug, Clone)]
pub struct ProposalIndex<T> {
    pub spec: FeatureSpec,
    pub program: ProgramKind,
    /// Flattened latent coordinate names, fixed across entries.
    pub latent_names: Vec<String>,
    pub features: Vec<T>,
    pub latents: Vec<T>,
}

impl<T: Scalar> ProposalIndex<T> {
    pub fn new(spec: FeatureSpec, program: ProgramKind, latent_names: Vec<String>) -> Self {
        Self { spec, program, latent_names, features: Vec::new(), latents: Vec::new() }
    }

    pub fn len(&self) -> usize {
        if self.latent_names.is_empty() {
            0
        } else {
            self.latents.len() / self.latent_names.len()
        }
    }

    pub fn is_empty(&self) -> bool {
        self.latents.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.spec.dim()
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_names.len()
    }

    pub fn feature_row(&self, i: usize) -> &[T] {
        let m = self.feature_dim();
        &self.features[i * m..(i + 1) * m]
    }

    pub fn latent_row(&self, i: usize) -> &[T] {
        let d = self.latent_dim();
        &self.latents[i * d..(i + 1) * d]
    }

    pub fn push_entry(&mut self, features: &[T], latents: &[T]) -> Result<()> {
        if features.len() != self.feature_dim() || latents.len() != self.latent_dim() {
            return Err(Error::InvalidParameter(format!(
                "entry dims {}x{} do not match index dims {}x{}",
                features.len(),
                latents.len(),
                self.feature_dim(),
                self.latent_dim()
            )));
        }
        self.features.extend_from_slice(features);
        self.latents.extend_from_slice(latents);
        Ok(())
    }

    /// Indices of the `k` nearest entries by Euclidean feature distance,
    /// exact linear scan, ties broken by entry index.
    pub fn knn(&self, query: &[T], k: usize) -> Result<Vec<usize>> {
        if query.len() != self.feature_dim() {
            return Err(Error::InvalidParameter(format!(
                "query dim {} vs feature dim {}",
                query.len(),
                self.feature_dim()
            )));
        }
        if k == 0 || k > self.len() {
            return Err(Error::InvalidParameter(format!(
                "k = {k} outside 1..={} entries",
                self.len()
            )));
        }
        let mut dists: Vec<(T, usize)> = (0..self.len())
            .map(|i| {
                let row = self.feature_row(i);
                let mut acc = T::zero();
                for (a, b) in row.iter().zip(query) {
                    let d = *a - *b;
                    acc += d * d;
                }
                (acc, i)
            })
            .collect();
        dists.sort_by(|a, b| {
            a.0.partial_cmp(&b.0)
                .expect("finite distances")
                .then(a.1.cmp(&b.1))
        });
        Ok(dists[..k].iter().map(|&(_, i)| i).collect())
    }
}

/// Standard normal CDF, used for component truncation masses.
fn std_normal_cdf(t: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-t / std::f64::consts::SQRT_2)
}

/// Per-dimension Gaussian KDE over a neighbor set, with each component
/// truncated to the per-dimension support box and renormalized. A product
/// Gaussian in high dimension escapes some bounded coordinate with
/// probability near 1, so an untruncated sampler would propose into
/// zero-prior regions essentially always; truncation keeps every draw in
/// support while the density stays exactly normalized.
#[derive(Debug, Clone)]
pub struct Kde<T> {
    pub dim: usize,
    /// Row-major neighbor latents, `count x dim`.
    pub centers: Vec<T>,
    pub bandwidths: Vec<T>,
    /// Per-dimension support; `None` leaves the dimension unbounded.
    pub bounds: Vec<Option<(T, T)>>,
    /// Per-component log truncation mass, `sum_d ln Z_jd`.
    comp_log_mass: Vec<T>,
}

impl<T: Scalar> Kde<T> {
    pub fn new(
        dim: usize,
        centers: Vec<T>,
        bandwidths: Vec<T>,
        bounds: Vec<Option<(T, T)>>,
    ) -> Self {
        debug_assert_eq!(bandwidths.len(), dim);
        debug_assert_eq!(bounds.len(), dim);
        let count = if dim == 0 { 0 } else { centers.len() / dim };
        let mut comp_log_mass = Vec::with_capacity(count);
        for j in 0..count {
            let row = &centers[j * dim..(j + 1) * dim];
            let mut acc = 0.0f64;
            for ((&c, &bw), b) in row.iter().zip(&bandwidths).zip(&bounds) {
                if let Some((lo, hi)) = b {
                    let h = to_f64(bw);
                    if h > 0.0 {
                        let zl = (to_f64(*lo) - to_f64(c)) / h;
                        let zh = (to_f64(*hi) - to_f64(c)) / h;
                        acc += (std_normal_cdf(zh) - std_normal_cdf(zl)).ln();
                    }
                }
            }
            comp_log_mass.push(cast::<T>(acc));
        }
        Self { dim, centers, bandwidths, bounds, comp_log_mass }
    }

    pub fn count(&self) -> usize {
        self.centers.len() / self.dim
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<T> {
        let pick = rng.random_range(0..self.count());
        let row = &self.centers[pick * self.dim..(pick + 1) * self.dim];
        row.iter()
            .zip(&self.bandwidths)
            .zip(&self.bounds)
            .map(|((&c, &bw), b)| {
                let mut v = c + bw * T::std_normal(rng);
                if let Some((lo, hi)) = b {
                    // Centers are stored in-support, so the in-box mass per
                    // dimension stays O(1) and this loop ends immediately in
                    // practice; the fallback never fires for positive mass.
                    let mut tries = 0;
                    while (v < *lo || v > *hi) && tries < 1000 {
                        v = c + bw * T::std_normal(rng);
                        tries += 1;
                    }
                    if v < *lo || v > *hi {
                        v = c;
                    }
                }
                v
            })
            .collect()
    }

    /// Exact mixture log density at `x`; zero outside the support box.
    pub fn log_density(&self, x: &[T]) -> T {
        debug_assert_eq!(x.len(), self.dim);
        for (b, &xi) in self.bounds.iter().zip(x) {
            if let Some((lo, hi)) = b {
                if xi < *lo || xi > *hi {
                    return T::from_f64(f64::NEG_INFINITY).unwrap();
                }
            }
        }
        let half = cast::<T>(0.5);
        let ln_2pi = cast::<T>((2.0 * std::f64::consts::PI).ln());
        let mut norm = T::zero();
        for bw in &self.bandwidths {
            norm += bw.ln() + half * ln_2pi;
        }
        let mut terms: Vec<T> = Vec::with_capacity(self.count());
        for i in 0..self.count() {
            let row = &self.centers[i * self.dim..(i + 1) * self.dim];
            let mut acc = T::zero();
            for ((&c, &bw), &xi) in row.iter().zip(&self.bandwidths).zip(x) {
                let z = (xi - c) / bw;
                acc -= half * z * z;
            }
            terms.push(acc - norm - self.comp_log_mass[i]);
        }
        log_sum_exp(&terms) - cast::<T>((self.count() as f64).ln())
    }
}

pub fn log_sum_exp<T: Scalar>(terms: &[T]) -> T {
    let mut m = T::from_f64(f64::NEG_INFINITY).unwrap();
    for &t in terms {
        if t > m {
            m = t;
        }
    }
    if !m.is_finite() {
        return m;
    }
    let mut acc = T::zero();
    for &t in terms {
        acc += (t - m).exp();
    }
    m + acc.ln()
}

/// Fit a per-dimension Gaussian KDE to the given index entries with
/// Silverman bandwidths, floored at `floors` per dimension and truncated to
/// `bounds` (the prior support of each coordinate).
pub fn fit_kde<T: Scalar>(
    index: &ProposalIndex<T>,
    entries: &[usize],
    floors: &[T],
    bounds: &[Option<(T, T)>],
) -> Kde<T> {
    let d = index.latent_dim();
    debug_assert_eq!(floors.len(), d);
    debug_assert_eq!(bounds.len(), d);
    let k = entries.len();
    let mut centers = Vec::with_capacity(k * d);
    for &i in entries {
        centers.extend_from_slice(index.latent_row(i));
    }
    let silverman = 1.06 * (k as f64).powf(-0.2);
    let mut bandwidths = Vec::with_capacity(d);
    for j in 0..d {
        let mut mean = T::zero();
        for row in 0..k {
            mean += centers[row * d + j];
        }
        mean /= cast(k as f64);
        let mut var = T::zero();
        for row in 0..k {
            let e = centers[row * d + j] - mean;
            var += e * e;
        }
        let sd = if k > 1 { (var / cast::<T>((k - 1) as f64)).sqrt() } else { T::zero() };
        let bw = sd * cast::<T>(silverman);
        bandwidths.push(if bw > floors[j] { bw } else { floors[j] });
    }
    Kde::new(d, centers, bandwidths, bounds.to_vec())
}

/// Draw one proposal from the KDE over the `k` nearest dataset entries to
/// the observation features; returns the flat latent vector and its log
/// proposal density.
pub fn propose<T: Scalar, R: Rng + ?Sized>(
    index: &ProposalIndex<T>,
    obs_features: &[T],
    k: usize,
    floors: &[T],
    bounds: &[Option<(T, T)>],
    rng: &mut R,
) -> Result<(Vec<T>, T)> {
    let neighbors = index.knn(obs_features, k)?;
    let kde = fit_kde(index, &neighbors, floors, bounds);
    let x = kde.sample(rng);
    let q = kde.log_density(&x);
    Ok((x, q))
}

/// Outcome of dataset generation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DatasetStats {
    pub requested: usize,
    pub kept: usize,
    /// Entries dropped because their render produced no contour pixels.
    pub dropped_empty: usize,
}

/// Sample `n` scenes from the prior, render them, and index the ones whose
/// contours are non-empty. Entry `i` uses an independent RNG stream of
/// `seed`, so results are reproducible and order-independent under
/// parallelism.
pub fn generate_dataset<T: Scalar>(
    n: usize,
    program: ProgramKind,
    model: &ModelConfig,
    render: &RenderConfig,
    grid: u32,
    seed: u64,
) -> Result<(ProposalIndex<T>, DatasetStats)> {
    let spec = FeatureSpec { grid, width: render.width, height: render.height };
    let sample = |rng: &mut ChaCha8Rng| -> SceneTrace<T> {
        match program {
            ProgramKind::Object => sample_object_prior(rng, model),
            ProgramKind::Body => sample_body_prior(rng, model),
        }
    };

    let rows: Vec<Option<(Vec<T>, Vec<T>)>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let mut trace = sample(&mut rng);
            let view = match render_trace(&mut trace, model, render) {
                Ok(v) => v,
                Err(_) => return None,
            };
            if view.on_count == 0 {
                return None;
            }
            let features = contour_features(&view.contour, &spec).ok()?;
            Some((features, trace.flat_values()))
        })
        .collect();

    // Latent names come from the program structure, not the draw.
    let mut name_rng = ChaCha8Rng::seed_from_u64(seed);
    name_rng.set_stream(u64::MAX);
    let names = sample(&mut name_rng).flat_names();

    let mut index = ProposalIndex::new(spec, program, names);
    let mut dropped = 0usize;
    for row in rows {
        match row {
            Some((f, l)) => index.push_entry(&f, &l)?,
            None => dropped += 1,
        }
    }
    if index.is_empty() {
        return Err(Error::EmptyObservation);
    }
    let stats = DatasetStats { requested: n, kept: index.len(), dropped_empty: dropped };
    Ok((index, stats))
}

/// Bandwidth floors for a trace's latent layout: `frac` of each coordinate's
/// prior scale.
pub fn bandwidth_floors<T: Scalar>(trace: &SceneTrace<T>, frac: f64) -> Vec<T> {
    trace
        .continuous_sites()
        .iter()
        .map(|s| trace.latents()[s.latent].prior.scale() * cast::<T>(frac))
        .collect()
}

/// Hard support bounds for a trace's continuous coordinates, aligned with
/// `flat_values`; Gaussian-prior coordinates come back unbounded.
pub fn coord_bounds<T: Scalar>(trace: &SceneTrace<T>) -> Vec<Option<(T, T)>> {
    trace
        .continuous_sites()
        .iter()
        .map(|s| trace.latents()[s.latent].prior.bounds())
        .collect()
}
