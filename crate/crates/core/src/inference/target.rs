//! Likelihood targets the samplers score traces against.

use crate::config::ModelConfig;
use crate::error::{Error, Result};
use crate::likelihood::{log_likelihood, ObservationImage};
use crate::render::{render_trace, RenderConfig};
use crate::scalar::{cast, Scalar};
use crate::scene::{SceneTrace, Site, Value};

/// Anything that can score a trace. Implementations may use the trace's
/// render and likelihood caches, so the trace is mutable.
pub trait Target<T: Scalar>: Sync {
    fn log_likelihood(&self, trace: &mut SceneTrace<T>) -> T;
}

/// Constant likelihood: the posterior is the prior. Used to validate that
/// every kernel leaves the prior invariant.
#[derive(Debug, Clone, Copy, Default)]
pub struct FlatTarget;

impl<T: Scalar> Target<T> for FlatTarget {
    fn log_likelihood(&self, _trace: &mut SceneTrace<T>) -> T {
        T::zero()
    }
}

/// Likelihood floor substituted when a trace fails to render or covers no
/// pixels; finite so comparisons against real scores stay well defined.
pub const LIKELIHOOD_FLOOR: f64 = -1e9;

/// Render-and-compare target: renders the trace's contour and scores the
/// chamfer distance to the observation under a Gaussian with scale `sigma`.
pub struct ImageTarget<'a, T> {
    pub obs: &'a ObservationImage<T>,
    pub model: &'a ModelConfig,
    pub render: RenderConfig,
    pub sigma: T,
    pub floor: T,
}

impl<'a, T: Scalar> ImageTarget<'a, T> {
    pub fn new(
        obs: &'a ObservationImage<T>,
        model: &'a ModelConfig,
        render: RenderConfig,
        sigma: T,
    ) -> Self {
        Self { obs, model, render, sigma, floor: cast(LIKELIHOOD_FLOOR) }
    }
}

impl<T: Scalar> Target<T> for ImageTarget<'_, T> {
    fn log_likelihood(&self, trace: &mut SceneTrace<T>) -> T {
        if let Some(ll) = trace.cached_log_likelihood {
            return ll;
        }
        let ll = match render_trace(trace, self.model, &self.render) {
            Ok(view) => log_likelihood(self.obs, view, self.sigma).unwrap_or(self.floor),
            Err(_) => self.floor,
        };
        trace.cached_log_likelihood = Some(ll);
        ll
    }
}

/// Resolve a flattened coordinate name (`name` or `name[j]`) to a site.
pub fn resolve_site<T: Scalar>(trace: &SceneTrace<T>, flat_name: &str) -> Result<Site> {
    let (base, comp) = match flat_name.strip_suffix(']').and_then(|s| s.split_once('[')) {
        Some((base, idx)) => {
            let j: usize = idx
                .parse()
                .map_err(|_| Error::InvalidBinding(format!("bad component in {flat_name:?}")))?;
            (base, Some(j))
        }
        None => (flat_name, None),
    };
    let latent = trace
        .index_of(base)
        .ok_or_else(|| Error::InvalidBinding(format!("no latent named {base:?}")))?;
    match (&trace.latents()[latent].value, comp) {
        (Value::Scalar(_), None) => Ok(Site { latent, comp: None }),
        (Value::Vector(vs), Some(j)) if j < vs.len() => Ok(Site { latent, comp: Some(j) }),
        _ => Err(Error::InvalidBinding(format!("site shape mismatch for {flat_name:?}"))),
    }
}

/// Synthetic target: independent Gaussian observations of named coordinates.
/// Conjugate with Gaussian priors, so posterior moments are known in closed
/// form; used to validate sampler correctness.
#[derive(Debug, Clone)]
pub struct GaussianSiteTarget {
    /// `(flat coordinate name, observed value, observation std)`.
    pub terms: Vec<(String, f64, f64)>,
}

impl<T: Scalar> Target<T> for GaussianSiteTarget {
    fn log_likelihood(&self, trace: &mut SceneTrace<T>) -> T {
        let half = cast::<T>(0.5);
        let ln_2pi = cast::<T>((2.0 * std::f64::consts::PI).ln());
        let mut acc = T::zero();
        for (name, y, std) in &self.terms {
            let site = resolve_site(trace, name).expect("target names a real coordinate");
            let z = (trace.coord(site) - cast::<T>(*y)) / cast::<T>(*std);
            acc += -half * z * z - cast::<T>(*std).ln() - half * ln_2pi;
        }
        acc
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::object::sample_object_prior;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn resolve_site_handles_scalars_vectors_and_errors() {
        let cfg = ModelConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let trace = sample_object_prior::<f64, _>(&mut rng, &cfg);
        let s = resolve_site(&trace, "height").unwrap();
        assert_eq!(s.comp, None);
        let v = resolve_site(&trace, "gp_z1[3]").unwrap();
        assert_eq!(v.comp, Some(3));
        assert!(resolve_site(&trace, "gp_z1").is_err()); // vector needs component
        assert!(resolve_site(&trace, "gp_z1[99]").is_err());
        assert!(resolve_site(&trace, "nope").is_err());
        assert!(resolve_site(&trace, "gp_z1[x]").is_err());
    }

    #[test]
    fn gaussian_site_target_matches_hand_density() {
        let cfg = ModelConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut trace = sample_object_prior::<f64, _>(&mut rng, &cfg);
        let x = trace.scalar("height");
        let target = GaussianSiteTarget { terms: vec![("height".into(), 4.0, 2.0)] };
        let got = target.log_likelihood(&mut trace);
        let z: f64 = (x - 4.0) / 2.0;
        let expect = -0.5 * z * z - 2.0_f64.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln();
        approx::assert_relative_eq!(got, expect, epsilon = 1e-12);
    }

    #[test]
    fn image_target_caches_and_is_finite_for_prior_draws() {
        let cfg = ModelConfig::default();
        let render = RenderConfig::default().with_size(48, 48);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut gt = sample_object_prior::<f64, _>(&mut rng, &cfg);
        let view = render_trace(&mut gt, &cfg, &render).unwrap().clone();
        let obs = ObservationImage::from_view(&view).unwrap();
        let target = ImageTarget::new(&obs, &cfg, render, 1.0);

        let mut same = gt.fork();
        let ll = target.log_likelihood(&mut same);
        // Perfect overlap: chamfer 0, so ll = -0.5 ln(2 pi).
        approx::assert_relative_eq!(ll, -0.5 * (2.0 * std::f64::consts::PI).ln(), epsilon = 1e-12);
        assert_eq!(same.cached_log_likelihood, Some(ll));
        assert_eq!(target.log_likelihood(&mut same), ll);
    }

    #[test]
    fn image_target_floors_unrenderable_traces() {
        let cfg = ModelConfig::default();
        let render = RenderConfig::default().with_size(48, 48);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut gt = sample_object_prior::<f64, _>(&mut rng, &cfg);
        let view = render_trace(&mut gt, &cfg, &render).unwrap().clone();
        let obs = ObservationImage::from_view(&view).unwrap();
        let target = ImageTarget::new(&obs, &cfg, render, 1.0);

        // Push the object far off screen: nothing rasterizes.
        let mut off = gt.fork();
        let site = resolve_site(&off, "translation[0]").unwrap();
        off.set_coord(site, 500.0);
        assert_eq!(target.log_likelihood(&mut off), LIKELIHOOD_FLOOR);
    }
}
