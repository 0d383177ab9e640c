//! Armature: a tree of joints with per-joint scale, rotation, and location
//! latents. Transforms compose from each joint down through its descendants
//! (forward kinematics); an optional stop node detaches a subtree from
//! upstream deformation.

use nalgebra::{Matrix4, Point3, Rotation3, Vector3};

use crate::config::BodyConfig;
use crate::error::{Error, Result};
use crate::geometry::lathe::capsule;
use crate::geometry::TriangleMesh;
use crate::scalar::{cast, Scalar};

#[derive(Debug, Clone)]
pub struct Joint<T: Scalar> {
    pub name: String,
    pub parent: Option<usize>,
    /// Pivot point; rotations and scales act about it.
    pub head: Point3<T>,
    pub tail: Point3<T>,
    pub radius: T,
}

/// Per-joint pose latents: translation offset, Euler rotation in radians,
/// per-axis scale. Identity poses leave the rest mesh untouched.
#[derive(Debug, Clone, PartialEq)]
pub struct JointPose<T: Scalar> {
    pub location: Vector3<T>,
    pub rotation_rad: Vector3<T>,
    pub scale: Vector3<T>,
}

impl<T: Scalar> JointPose<T> {
    pub fn identity() -> Self {
        Self {
            location: Vector3::zeros(),
            rotation_rad: Vector3::zeros(),
            scale: Vector3::from_element(T::one()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ArmatureTree<T: Scalar> {
    pub joints: Vec<Joint<T>>,
    pub poses: Vec<JointPose<T>>,
    /// Joint whose subtree ignores upstream deformation, if any.
    pub stop_node: Option<usize>,
}

impl<T: Scalar> ArmatureTree<T> {
    /// Resolve the skeleton config into an indexed tree at rest pose.
    pub fn from_config(cfg: &BodyConfig) -> Result<Self> {
        let find = |name: &str| cfg.joints.iter().position(|j| j.name == name);
        let mut joints = Vec::with_capacity(cfg.joints.len());
        let mut roots = 0usize;
        for spec in &cfg.joints {
            let parent = match &spec.parent {
                None => {
                    roots += 1;
                    None
                }
                Some(p) => Some(find(p).ok_or_else(|| {
                    Error::InvalidBinding(format!("joint {:?} has unknown parent {p:?}", spec.name))
                })?),
            };
            joints.push(Joint {
                name: spec.name.clone(),
                parent,
                head: Point3::new(cast(spec.head[0]), cast(spec.head[1]), cast(spec.head[2])),
                tail: Point3::new(cast(spec.tail[0]), cast(spec.tail[1]), cast(spec.tail[2])),
                radius: cast(spec.radius),
            });
        }
        if roots != 1 {
            return Err(Error::InvalidBinding(format!("skeleton has {roots} roots, need 1")));
        }
        let tree = Self {
            poses: vec![JointPose::identity(); joints.len()],
            joints,
            stop_node: None,
        };
        tree.check_acyclic()?;
        Ok(tree)
    }

    fn check_acyclic(&self) -> Result<()> {
        for start in 0..self.joints.len() {
            let mut cursor = self.joints[start].parent;
            let mut hops = 0;
            while let Some(p) = cursor {
                hops += 1;
                if hops > self.joints.len() {
                    return Err(Error::InvalidBinding(format!(
                        "parent cycle through joint {:?}",
                        self.joints[start].name
                    )));
                }
                cursor = self.joints[p].parent;
            }
        }
        Ok(())
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.joints.iter().position(|j| j.name == name)
    }

    /// Local pose transform of one joint, acting about its head.
    fn local_transform(&self, i: usize) -> Matrix4<T> {
        let joint = &self.joints[i];
        let pose = &self.poses[i];
        let rot = Rotation3::from_euler_angles(
            pose.rotation_rad.x,
            pose.rotation_rad.y,
            pose.rotation_rad.z,
        );
        let mut m = rot.to_homogeneous();
        for c in 0..3 {
            for r in 0..3 {
                m[(r, c)] *= pose.scale[c];
            }
        }
        // translate(head + location) * R * S * translate(-head)
        let t = joint.head.coords + pose.location;
        let shift = m * (-joint.head.coords).to_homogeneous();
        m[(0, 3)] = t.x + shift.x;
        m[(1, 3)] = t.y + shift.y;
        m[(2, 3)] = t.z + shift.z;
        m
    }

    /// World transform per joint: parent world times local pose, composed
    /// root-first. The stop node (and so its subtree) restarts from the
    /// rest frame.
    pub fn world_transforms(&self) -> Vec<Matrix4<T>> {
        let n = self.joints.len();
        let mut world: Vec<Option<Matrix4<T>>> = vec![None; n];
        fn resolve<T: Scalar>(tree: &ArmatureTree<T>, world: &mut Vec<Option<Matrix4<T>>>, i: usize) -> Matrix4<T> {
            if let Some(m) = world[i] {
                return m;
            }
            let local = tree.local_transform(i);
            let m = match tree.joints[i].parent {
                Some(p) if tree.stop_node != Some(i) => resolve(tree, world, p) * local,
                _ => local,
            };
            world[i] = Some(m);
            m
        }
        (0..n).map(|i| resolve(self, &mut world, i)).collect()
    }

    /// Deformed head positions, one per joint.
    pub fn keypoints(&self) -> Vec<Point3<T>> {
        self.world_transforms()
            .iter()
            .zip(&self.joints)
            .map(|(w, j)| w.transform_point(&j.head))
            .collect()
    }

    /// Rest-pose capsule mesh with one vertex group per joint.
    pub fn base_mesh(&self, segments: u32, cap_rings: u32) -> Result<TriangleMesh<T>> {
        let mut mesh: Option<TriangleMesh<T>> = None;
        let n = self.joints.len();
        for (i, j) in self.joints.iter().enumerate() {
            let mut part = capsule(j.head, j.tail, j.radius, segments, cap_rings)
                .map_err(|e| Error::DegenerateGeometry(format!("joint {:?}: {e}", j.name)))?;
            let count = part.vertex_count() as u32;
            let mut groups = vec![Vec::new(); n];
            groups[i] = (0..count).collect();
            part.vertex_groups = Some(groups);
            mesh = Some(match mesh {
                None => part,
                Some(m) => m.merge(part),
            });
        }
        mesh.ok_or_else(|| Error::InvalidBinding("empty skeleton".into()))
    }
}

/// Deform a skinned mesh by the armature's current poses. Every grouped
/// vertex moves rigidly with its joint; normals are recomputed afterwards.
pub fn apply_armature<T: Scalar>(
    mesh: &TriangleMesh<T>,
    tree: &ArmatureTree<T>,
) -> Result<TriangleMesh<T>> {
    let groups = mesh
        .vertex_groups
        .as_ref()
        .ok_or_else(|| Error::InvalidBinding("mesh has no vertex groups".into()))?;
    if groups.len() != tree.joints.len() {
        return Err(Error::InvalidBinding(format!(
            "{} vertex groups vs {} joints",
            groups.len(),
            tree.joints.len()
        )));
    }
    let n = mesh.vertex_count() as u32;
    let mut seen = vec![false; mesh.vertex_count()];
    let world = tree.world_transforms();
    let mut out = mesh.clone();
    for (j, verts) in groups.iter().enumerate() {
        for &v in verts {
            if v >= n {
                return Err(Error::InvalidBinding(format!(
                    "group {j} references vertex {v} beyond {n}"
                )));
            }
            if seen[v as usize] {
                return Err(Error::InvalidBinding(format!("vertex {v} bound to two joints")));
            }
            seen[v as usize] = true;
            out.vertices[v as usize] = world[j].transform_point(&mesh.vertices[v as usize]);
        }
    }
    out.recompute_normals()?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::BodyConfig;
    use approx::assert_relative_eq;

    fn tree() -> ArmatureTree<f64> {
        ArmatureTree::from_config(&BodyConfig::default()).unwrap()
    }

    #[test]
    fn rest_pose_world_transforms_are_identity() {
        let t = tree();
        for w in t.world_transforms() {
            for r in 0..4 {
                for c in 0..4 {
                    let expect = if r == c { 1.0 } else { 0.0 };
                    assert_relative_eq!(w[(r, c)], expect, epsilon = 1e-12);
                }
            }
        }
    }

    #[test]
    fn rest_pose_is_mesh_fixed_point() {
        let t = tree();
        let base = t.base_mesh(10, 3).unwrap();
        let deformed = apply_armature(&base, &t).unwrap();
        let max = base
            .vertices
            .iter()
            .zip(&deformed.vertices)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        assert!(max < 1e-12, "rest pose moved vertices by {max}");
    }

    #[test]
    fn base_mesh_is_closed_and_fully_bound() {
        let t = tree();
        let base = t.base_mesh(10, 3).unwrap();
        assert!(base.is_closed());
        let groups = base.vertex_groups.as_ref().unwrap();
        assert_eq!(groups.len(), 13);
        let bound: usize = groups.iter().map(Vec::len).sum();
        assert_eq!(bound, base.vertex_count());
    }

    #[test]
    fn rotation_propagates_to_descendants_only() {
        let mut t = tree();
        let shoulder = t.index_of("l_shoulder").unwrap();
        let wrist = t.index_of("l_wrist").unwrap();
        let knee = t.index_of("l_knee").unwrap();
        let rest = t.keypoints();
        // Bend the shoulder forward by 0.3 rad about z.
        t.poses[shoulder].rotation_rad.z = 0.3;
        let posed = t.keypoints();
        assert_relative_eq!(rest[shoulder].coords.norm(), posed[shoulder].coords.norm(), epsilon = 1e-12);
        assert!((posed[wrist] - rest[wrist]).norm() > 0.05, "wrist should follow shoulder");
        assert!((posed[knee] - rest[knee]).norm() < 1e-12, "legs must stay put");
    }

    #[test]
    fn rotation_is_about_the_head_pivot() {
        let mut t = tree();
        let elbow = t.index_of("l_elbow").unwrap();
        t.poses[elbow].rotation_rad.y = 1.0;
        let posed = t.keypoints();
        let rest_head = t.joints[elbow].head;
        assert_relative_eq!((posed[elbow] - rest_head).norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn stop_node_detaches_subtree() {
        let mut t = tree();
        let spine = t.index_of("spine").unwrap();
        let wrist = t.index_of("l_wrist").unwrap();
        let pelvis = t.index_of("pelvis").unwrap();
        t.poses[pelvis].rotation_rad.z = 0.5;
        let rest = ArmatureTree::from_config(&BodyConfig::default()).unwrap().keypoints();
        let moved = t.keypoints();
        assert!((moved[wrist] - rest[wrist]).norm() > 1e-3);
        t.stop_node = Some(spine);
        let stopped = t.keypoints();
        assert!((stopped[wrist] - rest[wrist]).norm() < 1e-12);
    }

    #[test]
    fn unknown_parent_rejected() {
        let mut cfg = BodyConfig::default();
        cfg.joints[3].parent = Some("flipper".into());
        assert!(matches!(ArmatureTree::<f64>::from_config(&cfg), Err(Error::InvalidBinding(_))));
    }

    #[test]
    fn duplicate_binding_rejected() {
        let t = tree();
        let mut base = t.base_mesh(8, 2).unwrap();
        if let Some(groups) = base.vertex_groups.as_mut() {
            let v = groups[0][0];
            groups[1].push(v);
        }
        assert!(matches!(apply_armature(&base, &t), Err(Error::InvalidBinding(_))));
    }
}
