//! Scene representation: latent variables with explicit priors, grouped into
//! a trace per generative program. Traces are the state of inference; every
//! kernel mutates them only through the setters here so the cached prior
//! terms and render caches stay consistent.

pub mod body;
pub mod gp;
pub mod object;

use nalgebra::{Matrix4, Rotation3, Vector3};
use rand::Rng;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::render::RenderedView;
use crate::scalar::{cast, to_f64, Scalar};

/// Which generative program produced a trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ProgramKind {
    Object,
    Body,
}

impl ProgramKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ProgramKind::Object => "object",
            ProgramKind::Body => "body",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "object" => Ok(ProgramKind::Object),
            "body" => Ok(ProgramKind::Body),
            other => Err(Error::Format(format!("unknown program kind {other:?}"))),
        }
    }
}

/// Latent value: scalar, fixed-length vector, or integer.
#[derive(Debug, Clone, PartialEq)]
pub enum Value<T> {
    Scalar(T),
    Vector(Vec<T>),
    Int(i64),
}

impl<T: Scalar> Value<T> {
    pub fn as_scalar(&self) -> T {
        match self {
            Value::Scalar(v) => *v,
            _ => panic!("latent is not a scalar"),
        }
    }

    pub fn as_vector(&self) -> &[T] {
        match self {
            Value::Vector(v) => v,
            _ => panic!("latent is not a vector"),
        }
    }

    pub fn as_int(&self) -> i64 {
        match self {
            Value::Int(v) => *v,
            _ => panic!("latent is not an integer"),
        }
    }

    /// Number of continuous coordinates this value contributes.
    pub fn dim(&self) -> usize {
        match self {
            Value::Scalar(_) => 1,
            Value::Vector(v) => v.len(),
            Value::Int(_) => 0,
        }
    }
}

/// Prior family of a single latent (applied per component for vectors).
#[derive(Debug, Clone, PartialEq)]
pub enum Prior<T> {
    /// Continuous uniform on `[lo, hi)`.
    Uniform { lo: T, hi: T },
    /// `lo + (hi - lo) * Beta(alpha, beta)`.
    RescaledBeta { alpha: f64, beta: f64, lo: T, hi: T },
    Gaussian { mean: T, std: T },
    /// Integer uniform on `lo..=hi`.
    UniformInt { lo: i64, hi: i64 },
}

impl<T: Scalar> Prior<T> {
    pub fn sample_scalar<R: Rng + ?Sized>(&self, rng: &mut R) -> T {
        match *self {
            Prior::Uniform { lo, hi } => rng.random_range(lo..hi),
            Prior::RescaledBeta { alpha, beta, lo, hi } => {
                lo + (hi - lo) * T::sample_beta(rng, alpha, beta)
            }
            Prior::Gaussian { mean, std } => T::sample_normal(rng, mean, std),
            Prior::UniformInt { .. } => panic!("integer prior sampled as scalar"),
        }
    }

    pub fn sample_int<R: Rng + ?Sized>(&self, rng: &mut R) -> i64 {
        match *self {
            Prior::UniformInt { lo, hi } => rng.random_range(lo..=hi),
            _ => panic!("continuous prior sampled as integer"),
        }
    }

    /// Natural log density (or probability mass) at `x`; `-inf` off support.
    pub fn log_density(&self, x: T) -> T {
        match *self {
            Prior::Uniform { lo, hi } => {
                if x >= lo && x < hi {
                    -(hi - lo).ln()
                } else {
                    T::from_f64(f64::NEG_INFINITY).unwrap()
                }
            }
            Prior::RescaledBeta { alpha, beta, lo, hi } => {
                let span = hi - lo;
                let u = (x - lo) / span;
                if u <= T::zero() || u >= T::one() {
                    return T::from_f64(f64::NEG_INFINITY).unwrap();
                }
                let ln_b = ln_gamma(alpha) + ln_gamma(beta) - ln_gamma(alpha + beta);
                cast::<T>(alpha - 1.0) * u.ln() + cast::<T>(beta - 1.0) * (T::one() - u).ln()
                    - cast::<T>(ln_b)
                    - span.ln()
            }
            Prior::Gaussian { mean, std } => {
                let z = (x - mean) / std;
                let half = cast::<T>(0.5);
                -half * z * z - std.ln() - half * cast::<T>((2.0 * std::f64::consts::PI).ln())
            }
            Prior::UniformInt { lo, hi } => {
                let xi = to_f64(x);
                if xi.fract() == 0.0 && xi >= lo as f64 && xi <= hi as f64 {
                    -cast::<T>(((hi - lo + 1) as f64).ln())
                } else {
                    T::from_f64(f64::NEG_INFINITY).unwrap()
                }
            }
        }
    }

    pub fn log_mass_int(&self, x: i64) -> T {
        match *self {
            Prior::UniformInt { lo, hi } => {
                if x >= lo && x <= hi {
                    -cast::<T>(((hi - lo + 1) as f64).ln())
                } else {
                    T::from_f64(f64::NEG_INFINITY).unwrap()
                }
            }
            _ => panic!("log_mass_int on continuous prior"),
        }
    }

    /// Characteristic scale: interval width, or std for Gaussians. Used for
    /// finite-difference step sizes and bandwidth floors.
    pub fn scale(&self) -> T {
        match *self {
            Prior::Uniform { lo, hi } => hi - lo,
            Prior::RescaledBeta { lo, hi, .. } => hi - lo,
            Prior::Gaussian { std, .. } => std,
            Prior::UniformInt { lo, hi } => cast((hi - lo) as f64),
        }
    }

    /// Hard support bounds, if any (Gaussians are unbounded).
    pub fn bounds(&self) -> Option<(T, T)> {
        match *self {
            Prior::Uniform { lo, hi } => Some((lo, hi)),
            Prior::RescaledBeta { lo, hi, .. } => Some((lo, hi)),
            Prior::Gaussian { .. } => None,
            Prior::UniformInt { lo, hi } => Some((cast(lo as f64), cast(hi as f64))),
        }
    }

    pub fn is_discrete(&self) -> bool {
        matches!(self, Prior::UniformInt { .. })
    }
}

/// One named latent variable.
#[derive(Debug, Clone)]
pub struct LatentVar<T> {
    pub name: String,
    pub value: Value<T>,
    pub prior: Prior<T>,
    /// Block label for grouped proposals (e.g. `affine`, `joint:l_elbow`).
    pub group: Option<String>,
}

impl<T: Scalar> LatentVar<T> {
    pub fn scalar(name: &str, value: T, prior: Prior<T>) -> Self {
        Self { name: name.to_owned(), value: Value::Scalar(value), prior, group: None }
    }

    pub fn vector(name: &str, value: Vec<T>, prior: Prior<T>) -> Self {
        Self { name: name.to_owned(), value: Value::Vector(value), prior, group: None }
    }

    pub fn int(name: &str, value: i64, prior: Prior<T>) -> Self {
        Self { name: name.to_owned(), value: Value::Int(value), prior, group: None }
    }

    pub fn with_group(mut self, group: &str) -> Self {
        self.group = Some(group.to_owned());
        self
    }

    /// Log prior of the current value (sum over vector components).
    pub fn log_prior_term(&self) -> T {
        match &self.value {
            Value::Scalar(v) => self.prior.log_density(*v),
            Value::Vector(vs) => {
                let mut acc = T::zero();
                for v in vs {
                    acc += self.prior.log_density(*v);
                }
                acc
            }
            Value::Int(v) => self.prior.log_mass_int(*v),
        }
    }

    /// Resample the whole value from its prior.
    pub fn resample<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        match &mut self.value {
            Value::Scalar(v) => *v = self.prior.sample_scalar(rng),
            Value::Vector(vs) => {
                for v in vs.iter_mut() {
                    *v = self.prior.sample_scalar(rng);
                }
            }
            Value::Int(v) => *v = self.prior.sample_int(rng),
        }
    }
}

/// Address of one continuous coordinate inside a trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Site {
    pub latent: usize,
    /// Component for vector latents; `None` for scalars.
    pub comp: Option<usize>,
}

/// A full assignment to one program's latents, with cached per-latent prior
/// terms and optional render/likelihood caches. Caches are dropped on any
/// mutation; `fork` clones the latents without the caches.
#[derive(Debug, Clone)]
pub struct SceneTrace<T> {
    program: ProgramKind,
    latents: Vec<LatentVar<T>>,
    prior_terms: Vec<T>,
    pub cached_render: Option<RenderedView<T>>,
    pub cached_log_likelihood: Option<T>,
}

impl<T: Scalar> SceneTrace<T> {
    pub fn new(program: ProgramKind, latents: Vec<LatentVar<T>>) -> Self {
        let prior_terms = latents.iter().map(LatentVar::log_prior_term).collect();
        Self { program, latents, prior_terms, cached_render: None, cached_log_likelihood: None }
    }

    pub fn program(&self) -> ProgramKind {
        self.program
    }

    pub fn latents(&self) -> &[LatentVar<T>] {
        &self.latents
    }

    pub fn len(&self) -> usize {
        self.latents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.latents.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.latents.iter().position(|l| l.name == name)
    }

    fn expect_index(&self, name: &str) -> usize {
        self.index_of(name)
            .unwrap_or_else(|| panic!("trace has no latent named {name:?}"))
    }

    pub fn scalar(&self, name: &str) -> T {
        self.latents[self.expect_index(name)].value.as_scalar()
    }

    pub fn vector(&self, name: &str) -> &[T] {
        self.latents[self.expect_index(name)].value.as_vector()
    }

    pub fn int(&self, name: &str) -> i64 {
        self.latents[self.expect_index(name)].value.as_int()
    }

    /// Sum of per-latent prior terms; `-inf` if any latent is off support.
    pub fn log_prior(&self) -> T {
        let mut acc = T::zero();
        for t in &self.prior_terms {
            acc += *t;
        }
        acc
    }

    fn invalidate(&mut self) {
        self.cached_render = None;
        self.cached_log_likelihood = None;
    }

    fn refresh_term(&mut self, idx: usize) {
        self.prior_terms[idx] = self.latents[idx].log_prior_term();
        self.invalidate();
    }

    /// Set one continuous coordinate (scalar latent or vector component).
    pub fn set_coord(&mut self, site: Site, v: T) {
        match (&mut self.latents[site.latent].value, site.comp) {
            (Value::Scalar(x), None) => *x = v,
            (Value::Vector(xs), Some(j)) => xs[j] = v,
            _ => panic!("site shape does not match latent {}", self.latents[site.latent].name),
        }
        self.refresh_term(site.latent);
    }

    pub fn coord(&self, site: Site) -> T {
        match (&self.latents[site.latent].value, site.comp) {
            (Value::Scalar(x), None) => *x,
            (Value::Vector(xs), Some(j)) => xs[j],
            _ => panic!("site shape does not match latent {}", self.latents[site.latent].name),
        }
    }

    pub fn set_int(&mut self, latent: usize, v: i64) {
        match &mut self.latents[latent].value {
            Value::Int(x) => *x = v,
            _ => panic!("latent {} is not an integer", self.latents[latent].name),
        }
        self.refresh_term(latent);
    }

    pub fn set_value(&mut self, latent: usize, value: Value<T>) {
        let slot = &mut self.latents[latent];
        match (&slot.value, &value) {
            (Value::Scalar(_), Value::Scalar(_)) | (Value::Int(_), Value::Int(_)) => {}
            (Value::Vector(a), Value::Vector(b)) if a.len() == b.len() => {}
            _ => panic!("value shape change on latent {}", slot.name),
        }
        slot.value = value;
        self.refresh_term(latent);
    }

    /// Resample one whole latent from its prior; returns the prior term of
    /// the new value.
    pub fn resample_latent<R: Rng + ?Sized>(&mut self, latent: usize, rng: &mut R) -> T {
        self.latents[latent].resample(rng);
        self.refresh_term(latent);
        self.prior_terms[latent]
    }

    /// Clone latents without render caches (cheap; used by every proposal).
    pub fn fork(&self) -> Self {
        Self {
            program: self.program,
            latents: self.latents.clone(),
            prior_terms: self.prior_terms.clone(),
            cached_render: None,
            cached_log_likelihood: None,
        }
    }

    /// All continuous coordinates, one site per scalar or vector component.
    pub fn continuous_sites(&self) -> Vec<Site> {
        let mut out = Vec::new();
        for (i, l) in self.latents.iter().enumerate() {
            match &l.value {
                Value::Scalar(_) => out.push(Site { latent: i, comp: None }),
                Value::Vector(vs) => {
                    out.extend((0..vs.len()).map(|j| Site { latent: i, comp: Some(j) }))
                }
                Value::Int(_) => {}
            }
        }
        out
    }

    pub fn discrete_latents(&self) -> Vec<usize> {
        (0..self.latents.len())
            .filter(|&i| matches!(self.latents[i].value, Value::Int(_)))
            .collect()
    }

    /// Distinct group labels in declaration order.
    pub fn groups(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for l in &self.latents {
            if let Some(g) = &l.group {
                if !out.iter().any(|x| x == g) {
                    out.push(g.clone());
                }
            }
        }
        out
    }

    /// Flattened continuous coordinates in declaration order.
    pub fn flat_values(&self) -> Vec<T> {
        self.continuous_sites().iter().map(|&s| self.coord(s)).collect()
    }

    /// Names matching `flat_values`, vector components as `name[i]`.
    pub fn flat_names(&self) -> Vec<String> {
        self.continuous_sites()
            .iter()
            .map(|s| {
                let l = &self.latents[s.latent];
                match s.comp {
                    None => l.name.clone(),
                    Some(j) => format!("{}[{j}]", l.name),
                }
            })
            .collect()
    }

    pub fn set_flat(&mut self, values: &[T]) -> Result<()> {
        let sites = self.continuous_sites();
        if sites.len() != values.len() {
            return Err(Error::InvalidParameter(format!(
                "flat vector length {} does not match trace dimension {}",
                values.len(),
                sites.len()
            )));
        }
        for (site, v) in sites.into_iter().zip(values) {
            self.set_coord(site, *v);
        }
        Ok(())
    }
}

/// Sum of latent log priors, recomputed from scratch.
pub fn trace_log_prior<T: Scalar>(trace: &SceneTrace<T>) -> T {
    let mut acc = T::zero();
    for l in trace.latents() {
        acc += l.log_prior_term();
    }
    acc
}

/// Whole-scene affine transform, decomposed as translate * rotate * scale.
/// Rotation is extrinsic XYZ Euler, stored in degrees.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineParams<T: Scalar> {
    pub translation: Vector3<T>,
    pub scale: Vector3<T>,
    pub rotation_deg: Vector3<T>,
}

impl<T: Scalar> AffineParams<T> {
    pub fn identity() -> Self {
        Self {
            translation: Vector3::zeros(),
            scale: Vector3::from_element(T::one()),
            rotation_deg: Vector3::zeros(),
        }
    }

    pub fn to_matrix(&self) -> Matrix4<T> {
        let deg = cast::<T>(std::f64::consts::PI / 180.0);
        let rot = Rotation3::from_euler_angles(
            self.rotation_deg.x * deg,
            self.rotation_deg.y * deg,
            self.rotation_deg.z * deg,
        );
        let mut m = rot.to_homogeneous();
        // Column scaling applies S before R; translation last.
        for c in 0..3 {
            let s = self.scale[c];
            for r in 0..3 {
                m[(r, c)] *= s;
            }
        }
        m[(0, 3)] = self.translation.x;
        m[(1, 3)] = self.translation.y;
        m[(2, 3)] = self.translation.z;
        m
    }
}

/// Names shared by both programs for the scene-level transform.
pub const AFFINE_GROUP: &str = "affine";
pub const LATENT_TRANSLATION: &str = "translation";
pub const LATENT_SCALE: &str = "scale";
pub const LATENT_ROTATION: &str = "rotation";

/// Push the three affine latents onto a latent list.
pub fn push_affine_latents<T: Scalar, R: Rng + ?Sized>(
    out: &mut Vec<LatentVar<T>>,
    cfg: &crate::config::AffineConfig,
    rng: &mut R,
) {
    let mut push = |name: &str, prior: Prior<T>| {
        let v = (0..3).map(|_| prior.sample_scalar(rng)).collect();
        out.push(LatentVar::vector(name, v, prior).with_group(AFFINE_GROUP));
    };
    push(LATENT_TRANSLATION, Prior::Uniform { lo: cast(cfg.trans_lo), hi: cast(cfg.trans_hi) });
    push(LATENT_SCALE, Prior::Uniform { lo: cast(cfg.scale_lo), hi: cast(cfg.scale_hi) });
    push(LATENT_ROTATION, Prior::Uniform { lo: cast(cfg.rot_lo_deg), hi: cast(cfg.rot_hi_deg) });
}

/// Read the affine transform out of a trace.
pub fn affine_from_trace<T: Scalar>(trace: &SceneTrace<T>) -> AffineParams<T> {
    let v3 = |name: &str| {
        let v = trace.vector(name);
        Vector3::new(v[0], v[1], v[2])
    };
    AffineParams {
        translation: v3(LATENT_TRANSLATION),
        scale: v3(LATENT_SCALE),
        rotation_deg: v3(LATENT_ROTATION),
    }
}
