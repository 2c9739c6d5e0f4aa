//! Poses, cameras and linear blend skinning.

use nalgebra::{Isometry3, Point3, Translation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::TemplateMesh;

/// Pinhole camera looking at a target point, y up.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub position: [f64; 3],
    pub look_at: [f64; 3],
    /// Vertical field of view in degrees.
    pub vfov_deg: f64,
    pub width: u32,
    pub height: u32,
}

impl Camera {
    /// Validated view basis: `(eye, right, up, forward, focal length in px)`.
    pub fn frame(&self) -> Result<CameraFrame> {
        if !(self.vfov_deg > 0.0 && self.vfov_deg < 180.0) {
            return Err(Error::DegenerateCamera(format!(
                "vertical field of view {} is outside (0, 180)",
                self.vfov_deg
            )));
        }
        if self.width < 16 || self.height < 16 {
            return Err(Error::DegenerateCamera(format!(
                "image size {}x{} is below 16x16",
                self.width, self.height
            )));
        }
        let eye = Point3::from(self.position);
        let target = Point3::from(self.look_at);
        let forward = (target - eye)
            .try_normalize(1e-12)
            .ok_or_else(|| Error::DegenerateCamera("eye coincides with look-at point".into()))?;
        let world_up = if forward.y.abs() > 0.999 {
            Vector3::z()
        } else {
            Vector3::y()
        };
        let right = forward.cross(&world_up).normalize();
        let up = right.cross(&forward);
        let focal = (self.height as f64 / 2.0) / (self.vfov_deg.to_radians() / 2.0).tan();
        Ok(CameraFrame {
            eye,
            right,
            up,
            forward,
            focal,
            cx: self.width as f64 / 2.0,
            cy: self.height as f64 / 2.0,
        })
    }
}

#[derive(Debug, Clone, Copy)]
pub struct CameraFrame {
    pub eye: Point3<f64>,
    pub right: Vector3<f64>,
    pub up: Vector3<f64>,
    pub forward: Vector3<f64>,
    pub focal: f64,
    pub cx: f64,
    pub cy: f64,
}

impl CameraFrame {
    /// Camera-space coordinates; `z` is the distance along the view axis.
    pub fn to_view(&self, p: &Point3<f64>) -> Vector3<f64> {
        let d = p - self.eye;
        Vector3::new(d.dot(&self.right), d.dot(&self.up), d.dot(&self.forward))
    }

    /// Continuous pixel coordinates (x right, y down) and depth.
    pub fn project(&self, p: &Point3<f64>) -> (f64, f64, f64) {
        let v = self.to_view(p);
        let x = self.cx + self.focal * v.x / v.z;
        let y = self.cy - self.focal * v.y / v.z;
        (x, y, v.z)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseParams {
    /// Axis-angle rotation per bone, radians, in the bone's rest frame.
    pub rotations: Vec<[f64; 3]>,
    pub root_translation: [f64; 3],
    pub camera: Camera,
}

impl PoseParams {
    pub fn rest(bone_count: usize, camera: Camera) -> Self {
        Self {
            rotations: vec![[0.0; 3]; bone_count],
            root_translation: [0.0; 3],
            camera,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (b, r) in self.rotations.iter().enumerate() {
            if !r.iter().all(|a| a.is_finite()) {
                return Err(Error::InvalidPose(format!("bone {b} rotation is not finite")));
            }
        }
        if !self.root_translation.iter().all(|a| a.is_finite()) {
            return Err(Error::InvalidPose("root translation is not finite".into()));
        }
        self.camera.frame().map(|_| ())
    }
}

/// Per-bone skinning transforms (canonical space to posed space).
pub fn bone_transforms(mesh: &TemplateMesh, pose: &PoseParams) -> Result<Vec<Isometry3<f64>>> {
    let bones = mesh.bones();
    if bones.len() != pose.rotations.len() {
        return Err(Error::BoneMismatch {
            mesh: bones.len(),
            pose: pose.rotations.len(),
        });
    }
    let mut out: Vec<Isometry3<f64>> = Vec::with_capacity(bones.len());
    for (b, bone) in bones.iter().enumerate() {
        let local = UnitQuaternion::from_scaled_axis(Vector3::from(pose.rotations[b]));
        let about_joint = bone.rest * Isometry3::from_parts(Translation3::identity(), local) * bone.rest.inverse();
        let world = match bone.parent {
            Some(p) => out[p] * about_joint,
            None => Isometry3::from_parts(Translation3::from(Vector3::from(pose.root_translation)), UnitQuaternion::identity()) * about_joint,
        };
        out.push(world);
    }
    Ok(out)
}

/// Linear blend skinning of the canonical vertices.
///
/// Written as `p + Σ w_b (M_b p - p)`, which equals `Σ w_b M_b p` for
/// weights summing to one and reproduces the rest pose bit-exactly.
pub fn articulate(mesh: &TemplateMesh, pose: &PoseParams) -> Result<Vec<Point3<f64>>> {
    let transforms = bone_transforms(mesh, pose)?;
    Ok(mesh
        .vertices()
        .iter()
        .zip(mesh.skin_weights())
        .map(|(p, weights)| {
            let delta = weights
                .iter()
                .fold(Vector3::zeros(), |acc, &(b, w)| acc + (transforms[b] * p - p) * w);
            p + delta
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::Bone;

    fn camera() -> Camera {
        Camera {
            position: [0.0, 1.0, 3.0],
            look_at: [0.0, 1.0, 0.0],
            vfov_deg: 40.0,
            width: 32,
            height: 32,
        }
    }

    #[test]
    fn rest_pose_is_exact() {
        let mesh = TemplateMesh::humanoid();
        let pose = PoseParams::rest(mesh.bones().len(), camera());
        let out = articulate(&mesh, &pose).unwrap();
        assert_eq!(out, mesh.vertices());
    }

    #[test]
    fn single_bone_rotation_matches_manual() {
        let joint = Vector3::new(1.0, 2.0, 0.0);
        let bones = vec![
            Bone {
                name: "root".into(),
                parent: None,
                rest: Isometry3::identity(),
            },
            Bone {
                name: "arm".into(),
                parent: Some(0),
                rest: Isometry3::from_parts(Translation3::from(joint), UnitQuaternion::identity()),
            },
        ];
        let verts = vec![
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(2.0, 2.0, 0.0),
            Point3::new(0.0, 1.0, 0.0),
        ];
        let weights = vec![vec![(0, 1.0)], vec![(1, 1.0)], vec![(0, 1.0)]];
        let mesh = TemplateMesh::new(verts, vec![[0, 1, 2]], bones, weights, None).unwrap();
        let mut pose = PoseParams::rest(2, camera());
        pose.rotations[1] = [0.0, 0.0, std::f64::consts::FRAC_PI_2];
        let out = articulate(&mesh, &pose).unwrap();
        // (2,2,0) about (1,2,0) by +90° around z: offset (1,0) -> (0,1).
        assert!((out[1] - Point3::new(1.0, 3.0, 0.0)).norm() < 1e-12);
        assert_eq!(out[0], Point3::origin());
    }

    #[test]
    fn bone_mismatch_errors() {
        let mesh = TemplateMesh::humanoid();
        let pose = PoseParams::rest(3, camera());
        assert!(matches!(articulate(&mesh, &pose), Err(Error::BoneMismatch { .. })));
    }

    #[test]
    fn degenerate_cameras_rejected() {
        let mut c = camera();
        c.vfov_deg = 0.0;
        assert!(c.frame().is_err());
        let mut c = camera();
        c.look_at = c.position;
        assert!(c.frame().is_err());
    }

    #[test]
    fn projects_look_at_to_center() {
        let f = camera().frame().unwrap();
        let (x, y, z) = f.project(&Point3::new(0.0, 1.0, 0.0));
        assert!((x - 16.0).abs() < 1e-12 && (y - 16.0).abs() < 1e-12);
        assert!((z - 3.0).abs() < 1e-12);
    }
}
