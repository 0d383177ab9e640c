//! Model configuration: prior hyperparameters for both generative programs
//! plus the armature skeleton. Loaded from TOML; missing keys fall back to
//! the defaults below, so partial files are valid.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{cast, Scalar};

/// Shared whole-scene affine prior: translation, per-axis scale, Euler
/// rotation in degrees, each uniform and independent per axis.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct AffineConfig {
    pub trans_lo: f64,
    pub trans_hi: f64,
    pub scale_lo: f64,
    pub scale_hi: f64,
    pub rot_lo_deg: f64,
    pub rot_hi_deg: f64,
}

impl Default for AffineConfig {
    fn default() -> Self {
        Self {
            trans_lo: -1.0,
            trans_hi: 1.0,
            scale_lo: 0.5,
            scale_hi: 1.5,
            rot_lo_deg: -30.0,
            rot_hi_deg: 30.0,
        }
    }
}

/// Lathed-object program hyperparameters.
///
/// Station grid: integer stations `1..=round(H)`, so `b0` bounds the maximum
/// latent profile length. The cut point `C` lives on `[a0, H]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ObjectConfig {
    /// Lower bound of the height prior and of the cut interval.
    pub a0: f64,
    /// Upper bound of the height prior; also the maximum station count.
    pub b0: f64,
    /// Beta shape parameters for the rescaled cut-point prior.
    pub cut_alpha: f64,
    pub cut_beta: f64,
    /// GP bandwidth prior: `len_lo + len_span * Beta(len_alpha, len_beta)`.
    pub len_lo: f64,
    pub len_span: f64,
    pub len_alpha: f64,
    pub len_beta: f64,
    /// Initial diagonal jitter for the Gram Cholesky; escalated on failure.
    pub gp_jitter: f64,
    /// Positive-radius mapping `r = max(r_min, r_base + r_scale * f)`.
    pub r_base: f64,
    pub r_scale: f64,
    pub r_min: f64,
    /// World height between adjacent stations.
    pub station_spacing: f64,
    /// Angular segments of the surface of revolution.
    pub segments: u32,
}

impl Default for ObjectConfig {
    fn default() -> Self {
        Self {
            a0: 1.0,
            b0: 10.0,
            cut_alpha: 2.0,
            cut_beta: 2.0,
            len_lo: 0.5,
            len_span: 4.0,
            len_alpha: 2.0,
            len_beta: 5.0,
            gp_jitter: 1e-8,
            r_base: 0.35,
            r_scale: 0.12,
            r_min: 0.05,
            station_spacing: 0.22,
            segments: 24,
        }
    }
}

/// One bone of the armature. `head` is the pivot; geometry spans
/// `head..tail` as a capsule of the given radius. Parent refers to another
/// joint by name; exactly one joint (the root) has no parent.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JointSpec {
    pub name: String,
    pub parent: Option<String>,
    pub head: [f64; 3],
    pub tail: [f64; 3],
    pub radius: f64,
}

/// Articulated-body program hyperparameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct BodyConfig {
    /// Per-joint scale prior: uniform on `scale_center +- scale_halfwidth`.
    pub scale_center: f64,
    pub scale_halfwidth: f64,
    /// Per-joint rotation prior: Normal(rot_mean, rot_std), radians per axis.
    pub rot_mean: f64,
    pub rot_std: f64,
    /// Per-joint location offset prior: uniform on `[loc_lo, loc_hi]`,
    /// the same interval on each axis.
    pub loc_lo: f64,
    pub loc_hi: f64,
    /// Capsule tessellation: angular segments and hemisphere rings.
    pub segments: u32,
    pub cap_rings: u32,
    pub joints: Vec<JointSpec>,
}

impl Default for BodyConfig {
    fn default() -> Self {
        Self {
            scale_center: 1.0,
            scale_halfwidth: 0.1,
            rot_mean: 0.0,
            rot_std: 0.1,
            loc_lo: -0.05,
            loc_hi: 0.05,
            segments: 10,
            cap_rings: 4,
            joints: default_skeleton(),
        }
    }
}

fn joint(name: &str, parent: Option<&str>, head: [f64; 3], tail: [f64; 3], radius: f64) -> JointSpec {
    JointSpec {
        name: name.to_owned(),
        parent: parent.map(str::to_owned),
        head,
        tail,
        radius,
    }
}

/// Thirteen-joint humanoid in T pose, about 1.7 units tall, pelvis at the
/// origin. Head and neck are merged into a single bone.
pub fn default_skeleton() -> Vec<JointSpec> {
    vec![
        joint("pelvis", None, [0.0, 0.0, 0.0], [0.0, 0.12, 0.0], 0.10),
        joint("spine", Some("pelvis"), [0.0, 0.12, 0.0], [0.0, 0.45, 0.0], 0.11),
        joint("head", Some("spine"), [0.0, 0.45, 0.0], [0.0, 0.72, 0.0], 0.085),
        joint("l_shoulder", Some("spine"), [0.05, 0.42, 0.0], [0.26, 0.42, 0.0], 0.05),
        joint("l_elbow", Some("l_shoulder"), [0.26, 0.42, 0.0], [0.50, 0.42, 0.0], 0.045),
        joint("l_wrist", Some("l_elbow"), [0.50, 0.42, 0.0], [0.68, 0.42, 0.0], 0.04),
        joint("r_shoulder", Some("spine"), [-0.05, 0.42, 0.0], [-0.26, 0.42, 0.0], 0.05),
        joint("r_elbow", Some("r_shoulder"), [-0.26, 0.42, 0.0], [-0.50, 0.42, 0.0], 0.045),
        joint("r_wrist", Some("r_elbow"), [-0.50, 0.42, 0.0], [-0.68, 0.42, 0.0], 0.04),
        joint("l_hip", Some("pelvis"), [0.09, -0.02, 0.0], [0.09, -0.42, 0.0], 0.06),
        joint("l_knee", Some("l_hip"), [0.09, -0.42, 0.0], [0.09, -0.80, 0.0], 0.05),
        joint("r_hip", Some("pelvis"), [-0.09, -0.02, 0.0], [-0.09, -0.42, 0.0], 0.06),
        joint("r_knee", Some("r_hip"), [-0.09, -0.42, 0.0], [-0.09, -0.80, 0.0], 0.05),
    ]
}

/// Full model configuration for both programs.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub affine: AffineConfig,
    pub object: ObjectConfig,
    pub body: BodyConfig,
}

impl ModelConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Maximum station count of the object program (latent GP vector length).
    pub fn max_stations(&self) -> usize {
        self.object.b0.round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let o = &self.object;
        let fail = |msg: &str| Err(Error::Config(msg.to_owned()));
        if !(o.a0 >= 1.0 && o.b0 >= o.a0) {
            return fail("object: need 1 <= a0 <= b0");
        }
        if o.a0.fract() != 0.0 || o.b0.fract() != 0.0 {
            return fail("object: a0 and b0 must be whole station counts");
        }
        if o.cut_alpha <= 0.0 || o.cut_beta <= 0.0 || o.len_alpha <= 0.0 || o.len_beta <= 0.0 {
            return fail("object: beta shape parameters must be positive");
        }
        if o.len_lo <= 0.0 || o.len_span <= 0.0 {
            return fail("object: bandwidth range must be positive");
        }
        if o.gp_jitter <= 0.0 || o.r_min <= 0.0 || o.r_scale <= 0.0 || o.station_spacing <= 0.0 {
            return fail("object: jitter, radii, and spacing must be positive");
        }
        if o.segments < 3 {
            return fail("object: need at least 3 angular segments");
        }
        let b = &self.body;
        if b.scale_halfwidth <= 0.0 || b.rot_std <= 0.0 || b.loc_lo >= b.loc_hi {
            return fail("body: degenerate joint priors");
        }
        if b.segments < 3 || b.cap_rings < 1 {
            return fail("body: capsule tessellation too coarse");
        }
        if b.joints.is_empty() {
            return fail("body: empty skeleton");
        }
        let a = &self.affine;
        if a.trans_lo >= a.trans_hi || a.scale_lo >= a.scale_hi || a.rot_lo_deg >= a.rot_hi_deg {
            return fail("affine: empty prior interval");
        }
        if a.scale_lo <= 0.0 {
            return fail("affine: scale must stay positive");
        }
        Ok(())
    }
}

/// Convenience: read an `f64` config field as the working scalar type.
pub fn cfg<T: Scalar>(v: f64) -> T {
    cast(v)
}
