//! Articulated-body generative program: per-joint scale, rotation, and
//! location latents over a fixed skeleton, plus the scene affine transform.

use nalgebra::{Point3, Vector3};
use rand::Rng;

use crate::config::ModelConfig;
use crate::error::Result;
use crate::geometry::armature::{apply_armature, ArmatureTree, JointPose};
use crate::geometry::TriangleMesh;
use crate::scalar::{cast, Scalar};
use crate::scene::{
    affine_from_trace, push_affine_latents, LatentVar, Prior, ProgramKind, SceneTrace,
};

pub fn latent_scale(joint: &str) -> String {
    format!("scale:{joint}")
}

pub fn latent_rotation(joint: &str) -> String {
    format!("rot:{joint}")
}

pub fn latent_location(joint: &str) -> String {
    format!("loc:{joint}")
}

pub fn joint_group(joint: &str) -> String {
    format!("joint:{joint}")
}

/// Draw a full body trace from the prior. Latents appear in skeleton order,
/// three per joint, with the affine transform last.
pub fn sample_body_prior<T: Scalar, R: Rng + ?Sized>(
    rng: &mut R,
    cfg: &ModelConfig,
) -> SceneTrace<T> {
    let b = &cfg.body;
    let mut latents: Vec<LatentVar<T>> = Vec::with_capacity(3 * b.joints.len() + 3);
    let scale_prior = Prior::Uniform {
        lo: cast(b.scale_center - b.scale_halfwidth),
        hi: cast(b.scale_center + b.scale_halfwidth),
    };
    let rot_prior = Prior::Gaussian { mean: cast(b.rot_mean), std: cast(b.rot_std) };
    let loc_prior = Prior::Uniform { lo: cast(b.loc_lo), hi: cast(b.loc_hi) };
    for spec in &b.joints {
        let group = joint_group(&spec.name);
        let mut push = |name: String, prior: &Prior<T>| {
            let v = (0..3).map(|_| prior.sample_scalar(rng)).collect();
            latents.push(LatentVar::vector(&name, v, prior.clone()).with_group(&group));
        };
        push(latent_scale(&spec.name), &scale_prior);
        push(latent_rotation(&spec.name), &rot_prior);
        push(latent_location(&spec.name), &loc_prior);
    }
    push_affine_latents(&mut latents, &cfg.affine, rng);
    SceneTrace::new(ProgramKind::Body, latents)
}

/// Armature at the poses encoded in the trace.
pub fn armature_from_trace<T: Scalar>(
    trace: &SceneTrace<T>,
    cfg: &ModelConfig,
) -> Result<ArmatureTree<T>> {
    let mut tree = ArmatureTree::from_config(&cfg.body)?;
    for (i, j) in tree.joints.iter().enumerate() {
        let v3 = |name: &str| {
            let v = trace.vector(name);
            Vector3::new(v[0], v[1], v[2])
        };
        tree.poses[i] = JointPose {
            location: v3(&latent_location(&j.name)),
            rotation_rad: v3(&latent_rotation(&j.name)),
            scale: v3(&latent_scale(&j.name)),
        };
    }
    Ok(tree)
}

/// Skinned capsule mesh deformed by the trace's poses, then the scene
/// affine transform.
pub fn build_body_mesh<T: Scalar>(
    trace: &SceneTrace<T>,
    cfg: &ModelConfig,
) -> Result<TriangleMesh<T>> {
    let tree = armature_from_trace(trace, cfg)?;
    let base = tree.base_mesh(cfg.body.segments, cfg.body.cap_rings)?;
    let deformed = apply_armature(&base, &tree)?;
    deformed.transformed(&affine_from_trace(trace).to_matrix())
}

/// World-space joint head positions after posing and the affine transform.
pub fn body_keypoints<T: Scalar>(
    trace: &SceneTrace<T>,
    cfg: &ModelConfig,
) -> Result<Vec<Point3<T>>> {
    let tree = armature_from_trace(trace, cfg)?;
    let affine = affine_from_trace(trace).to_matrix();
    Ok(tree
        .keypoints()
        .into_iter()
        .map(|p| affine.transform_point(&p))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::trace_log_prior;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cfg() -> ModelConfig {
        ModelConfig::default()
    }

    fn sample(seed: u64) -> SceneTrace<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        sample_body_prior(&mut rng, &cfg())
    }

    #[test]
    fn prior_sample_shape() {
        let t = sample(0);
        // 13 joints x 3 latents + 3 affine latents.
        assert_eq!(t.len(), 42);
        assert_eq!(t.flat_values().len(), 126);
        assert!(trace_log_prior(&t).is_finite());
        for spec in &cfg().body.joints {
            let sc = t.vector(&latent_scale(&spec.name));
            assert!(sc.iter().all(|&s| (0.9..1.1).contains(&s)));
            let loc = t.vector(&latent_location(&spec.name));
            assert!(loc.iter().all(|&l| (-0.05..0.05).contains(&l)));
        }
    }

    #[test]
    fn groups_cover_joints_and_affine() {
        let t = sample(1);
        let groups = t.groups();
        assert_eq!(groups.len(), 14);
        assert!(groups.contains(&"affine".to_owned()));
        assert!(groups.contains(&"joint:l_wrist".to_owned()));
    }

    #[test]
    fn meshes_are_closed_across_prior() {
        let cfg = cfg();
        for seed in 0..10 {
            let t = sample(seed);
            let m = build_body_mesh(&t, &cfg).unwrap();
            assert!(m.is_closed(), "open body mesh at seed {seed}");
        }
    }

    #[test]
    fn keypoints_count_matches_joints() {
        let cfg = cfg();
        let t = sample(3);
        let kp = body_keypoints(&t, &cfg).unwrap();
        assert_eq!(kp.len(), 13);
        // Pelvis head sits near the affine translation (pose offsets are small).
        let affine = affine_from_trace(&t);
        let d = (kp[0] - Point3::from(affine.translation)).norm();
        assert!(d < 0.2, "pelvis strayed {d}");
    }

    #[test]
    fn rotation_latents_deform_the_mesh() {
        let cfg = cfg();
        let mut t = sample(4);
        let rest = build_body_mesh(&t, &cfg).unwrap();
        let idx = t.index_of(&latent_rotation("l_shoulder")).unwrap();
        let mut v = t.latents()[idx].value.as_vector().to_vec();
        v[2] += 0.8;
        t.set_value(idx, crate::scene::Value::Vector(v));
        let posed = build_body_mesh(&t, &cfg).unwrap();
        let max = rest
            .vertices
            .iter()
            .zip(&posed.vertices)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        assert!(max > 0.1, "shoulder rotation should move arm vertices, max {max}");
    }
}
