//! Lathed-object generative program: overall height, a cut point splitting
//! the station grid into two GP-governed sections, per-section bandwidths,
//! whitened profile coordinates, and the scene affine transform.

use rand::Rng;

use crate::config::ModelConfig;
use crate::error::Result;
use crate::geometry::lathe::surface_of_revolution;
use crate::geometry::TriangleMesh;
use crate::scalar::{cast, to_f64, Scalar};
use crate::scene::gp::{self, RadiusMap};
use crate::scene::{
    affine_from_trace, push_affine_latents, LatentVar, Prior, ProgramKind, SceneTrace,
};

pub const LATENT_HEIGHT: &str = "height";
pub const LATENT_CUT: &str = "cut01";
pub const LATENT_BANDWIDTH_1: &str = "bandwidth1";
pub const LATENT_BANDWIDTH_2: &str = "bandwidth2";
pub const LATENT_GP_Z1: &str = "gp_z1";
pub const LATENT_GP_Z2: &str = "gp_z2";

/// Block-proposal groups: the extent pair moves together, and each section's
/// bandwidth moves jointly with its profile coordinates.
pub const GROUP_EXTENT: &str = "extent";
pub const GROUP_PROFILE_1: &str = "profile1";
pub const GROUP_PROFILE_2: &str = "profile2";

/// Draw a full object trace from the prior.
pub fn sample_object_prior<T: Scalar, R: Rng + ?Sized>(
    rng: &mut R,
    cfg: &ModelConfig,
) -> SceneTrace<T> {
    let o = &cfg.object;
    let n_max = cfg.max_stations();
    let mut latents: Vec<LatentVar<T>> = Vec::with_capacity(9);

    let h_prior = Prior::Uniform { lo: cast(o.a0), hi: cast(o.b0) };
    let h = h_prior.sample_scalar(rng);
    latents.push(LatentVar::scalar(LATENT_HEIGHT, h, h_prior).with_group(GROUP_EXTENT));

    // Cut point stored normalized on [0, 1]; the world cut is derived as
    // a0 + (H - a0) * cut01 so the latent dimension is height-independent.
    let cut_prior = Prior::RescaledBeta {
        alpha: o.cut_alpha,
        beta: o.cut_beta,
        lo: T::zero(),
        hi: T::one(),
    };
    let cut = cut_prior.sample_scalar(rng);
    latents.push(LatentVar::scalar(LATENT_CUT, cut, cut_prior).with_group(GROUP_EXTENT));

    let band_prior = Prior::RescaledBeta {
        alpha: o.len_alpha,
        beta: o.len_beta,
        lo: cast(o.len_lo),
        hi: cast(o.len_lo + o.len_span),
    };
    for (name, group) in [(LATENT_BANDWIDTH_1, GROUP_PROFILE_1), (LATENT_BANDWIDTH_2, GROUP_PROFILE_2)] {
        let v = band_prior.sample_scalar(rng);
        latents.push(LatentVar::scalar(name, v, band_prior.clone()).with_group(group));
    }

    let z_prior = Prior::Gaussian { mean: T::zero(), std: T::one() };
    for (name, group) in [(LATENT_GP_Z1, GROUP_PROFILE_1), (LATENT_GP_Z2, GROUP_PROFILE_2)] {
        let z: Vec<T> = (0..n_max).map(|_| z_prior.sample_scalar(rng)).collect();
        latents.push(LatentVar::vector(name, z, z_prior.clone()).with_group(group));
    }

    push_affine_latents(&mut latents, &cfg.affine, rng);
    SceneTrace::new(ProgramKind::Object, latents)
}

/// World-space cut point `C = a0 + (H - a0) * cut01`, always in `[a0, H]`.
pub fn object_cut<T: Scalar>(trace: &SceneTrace<T>, cfg: &ModelConfig) -> T {
    let a0 = cast::<T>(cfg.object.a0);
    let h = trace.scalar(LATENT_HEIGHT);
    a0 + (h - a0) * trace.scalar(LATENT_CUT)
}

/// Derived station layout of an object trace.
#[derive(Debug, Clone, PartialEq)]
pub struct StationSplit {
    /// Total station count, `round(H)`.
    pub total: usize,
    /// Stations owned by the first section: those with coordinate <= C.
    pub first: usize,
}

impl StationSplit {
    pub fn second(&self) -> usize {
        self.total - self.first
    }
}

pub fn station_split<T: Scalar>(trace: &SceneTrace<T>, cfg: &ModelConfig) -> StationSplit {
    let h = to_f64(trace.scalar(LATENT_HEIGHT));
    let total = (h.round() as usize).clamp(1, cfg.max_stations());
    let cut = to_f64(object_cut(trace, cfg));
    let first = (cut.floor() as usize).clamp(1, total);
    StationSplit { total, first }
}

/// Profile of an object trace: per-station GP values and mapped radii.
#[derive(Debug, Clone)]
pub struct ObjectShape<T> {
    pub split: StationSplit,
    /// Pre-mapping GP values for both sections, concatenated.
    pub gp_values: Vec<T>,
    /// Lathe radii after the positive-radius mapping.
    pub radii: Vec<T>,
    /// Ring heights, vertically centered about y = 0.
    pub heights: Vec<T>,
}

/// Evaluate the profile determined by the trace's current latents.
pub fn object_shape<T: Scalar>(trace: &SceneTrace<T>, cfg: &ModelConfig) -> Result<ObjectShape<T>> {
    let o = &cfg.object;
    let split = station_split(trace, cfg);
    let jitter = cast::<T>(o.gp_jitter);
    let map = RadiusMap::from_config(o);

    let grid1: Vec<T> = (1..=split.first).map(|k| cast(k as f64)).collect();
    let grid2: Vec<T> = (split.first + 1..=split.total).map(|k| cast(k as f64)).collect();
    let mut values = gp::values_from_whitened(
        &grid1,
        trace.scalar(LATENT_BANDWIDTH_1),
        jitter,
        trace.vector(LATENT_GP_Z1),
    )?;
    values.extend(gp::values_from_whitened(
        &grid2,
        trace.scalar(LATENT_BANDWIDTH_2),
        jitter,
        trace.vector(LATENT_GP_Z2),
    )?);

    let radii: Vec<T> = values.iter().map(|&f| map.apply(f)).collect();
    let spacing = cast::<T>(o.station_spacing);
    let half = cast::<T>(0.5) * spacing * cast::<T>((split.total - 1) as f64);
    let heights = (0..split.total)
        .map(|k| spacing * cast::<T>(k as f64) - half)
        .collect();
    Ok(ObjectShape { split, gp_values: values, radii, heights })
}

/// Lathe the profile and apply the scene affine transform. A one-station
/// profile is lathed as a slab one spacing thick so the solid stays closed.
pub fn build_object_mesh<T: Scalar>(
    trace: &SceneTrace<T>,
    cfg: &ModelConfig,
) -> Result<TriangleMesh<T>> {
    let shape = object_shape(trace, cfg)?;
    let mesh = if shape.split.total == 1 {
        let half = cast::<T>(0.5 * cfg.object.station_spacing);
        surface_of_revolution(
            &[-half, half],
            &[shape.radii[0], shape.radii[0]],
            cfg.object.segments,
        )?
    } else {
        surface_of_revolution(&shape.heights, &shape.radii, cfg.object.segments)?
    };
    mesh.transformed(&affine_from_trace(trace).to_matrix())
}
