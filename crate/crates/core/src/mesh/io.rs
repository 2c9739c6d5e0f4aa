//! Mesh files: an OBJ subset (`v x y z`, `f i j k`, 1-based) for geometry
//! and a JSON sidecar for bones, skin weights and part labels.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{Isometry3, Point3, Translation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use super::{BodyPart, Bone, SkinWeights, TemplateMesh};
use crate::error::{Error, Result};

#[derive(Debug, Serialize, Deserialize)]
struct RigFile {
    bones: Vec<BoneRecord>,
    /// Per vertex, `[bone, weight]` pairs.
    skin_weights: Vec<Vec<(usize, f64)>>,
    #[serde(default)]
    parts: Option<Vec<BodyPart>>,
}

#[derive(Debug, Serialize, Deserialize)]
struct BoneRecord {
    name: String,
    parent: Option<usize>,
    /// Joint position in canonical space.
    translation: [f64; 3],
    /// Axis-angle orientation of the bone frame (radians).
    #[serde(default)]
    rotation: [f64; 3],
}

pub fn parse_obj(text: &str, file: &str) -> Result<(Vec<Point3<f64>>, Vec<[usize; 3]>)> {
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let err = |msg: String| Error::Parse {
            file: file.to_string(),
            line: lineno + 1,
            msg,
        };
        let line = line.split('#').next().unwrap_or("").trim();
        let mut tokens = line.split_whitespace();
        match tokens.next() {
            Some("v") => {
                let coords: Vec<f64> = tokens
                    .map(|t| t.parse::<f64>().map_err(|e| err(format!("bad coordinate {t:?}: {e}"))))
                    .collect::<Result<_>>()?;
                // A trailing w or color block is tolerated; only xyz is used.
                if coords.len() < 3 {
                    return Err(err(format!("vertex needs 3 coordinates, got {}", coords.len())));
                }
                vertices.push(Point3::new(coords[0], coords[1], coords[2]));
            }
            Some("f") => {
                let idx: Vec<usize> = tokens
                    .map(|t| {
                        let head = t.split('/').next().unwrap_or(t);
                        match head.parse::<i64>() {
                            Ok(i) if i >= 1 => Ok(i as usize - 1),
                            Ok(i) => Err(err(format!("unsupported face index {i}"))),
                            Err(e) => Err(err(format!("bad face index {t:?}: {e}"))),
                        }
                    })
                    .collect::<Result<_>>()?;
                if idx.len() != 3 {
                    return Err(err(format!("only triangles are supported, got {} indices", idx.len())));
                }
                faces.push([idx[0], idx[1], idx[2]]);
            }
            _ => {}
        }
    }
    Ok((vertices, faces))
}

/// Parses geometry and rig text into a validated mesh.
pub fn parse_mesh(obj: &str, rig: &str, name: &str) -> Result<TemplateMesh> {
    let (vertices, faces) = parse_obj(obj, name)?;
    let rig: RigFile = serde_json::from_str(rig)?;
    let bones = rig
        .bones
        .into_iter()
        .map(|b| Bone {
            name: b.name,
            parent: b.parent,
            rest: Isometry3::from_parts(
                Translation3::from(Vector3::from(b.translation)),
                UnitQuaternion::from_scaled_axis(Vector3::from(b.rotation)),
            ),
        })
        .collect();
    let weights: Vec<SkinWeights> = rig.skin_weights;
    TemplateMesh::new(vertices, faces, bones, weights, rig.parts)
}

pub fn load_mesh(obj_path: &Path, rig_path: &Path) -> Result<TemplateMesh> {
    let obj = std::fs::read_to_string(obj_path)?;
    let rig = std::fs::read_to_string(rig_path)?;
    parse_mesh(&obj, &rig, &obj_path.display().to_string())
}

pub fn obj_string(mesh: &TemplateMesh) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# {} vertices, {} faces", mesh.vertex_count(), mesh.faces().len());
    for v in mesh.vertices() {
        let _ = writeln!(out, "v {} {} {}", v.x, v.y, v.z);
    }
    for f in mesh.faces() {
        let _ = writeln!(out, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1);
    }
    out
}

pub fn rig_string(mesh: &TemplateMesh) -> Result<String> {
    let rig = RigFile {
        bones: mesh
            .bones()
            .iter()
            .map(|b| BoneRecord {
                name: b.name.clone(),
                parent: b.parent,
                translation: b.rest.translation.vector.into(),
                rotation: b.rest.rotation.scaled_axis().into(),
            })
            .collect(),
        skin_weights: mesh.skin_weights().to_vec(),
        parts: Some(mesh.parts().to_vec()),
    };
    Ok(serde_json::to_string(&rig)?)
}

pub fn save_mesh(mesh: &TemplateMesh, obj_path: &Path, rig_path: &Path) -> Result<()> {
    std::fs::write(obj_path, obj_string(mesh))?;
    std::fs::write(rig_path, rig_string(mesh)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_minimal_obj() {
        let text = "# tri\nv 0 0 0\nv 1 0 0\nv 0 1 0\nvn 0 0 1\nf 1 2 3\n";
        let (v, f) = parse_obj(text, "t").unwrap();
        assert_eq!(v.len(), 3);
        assert_eq!(f, vec![[0, 1, 2]]);
    }

    #[test]
    fn accepts_slash_indices() {
        let (_, f) = parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1/1/1 2/2/2 3/3/3\n", "t").unwrap();
        assert_eq!(f, vec![[0, 1, 2]]);
    }

    #[test]
    fn rejects_quads_with_line_number() {
        let err = parse_obj("v 0 0 0\nf 1 2 3 4\n", "q.obj").unwrap_err();
        assert!(err.to_string().starts_with("q.obj:2:"), "{err}");
    }

    #[test]
    fn rejects_zero_index() {
        assert!(parse_obj("f 0 1 2\n", "t").is_err());
    }

    #[test]
    fn round_trip_preserves_mesh() {
        let mesh = TemplateMesh::humanoid();
        let back = parse_mesh(&obj_string(&mesh), &rig_string(&mesh).unwrap(), "rt").unwrap();
        assert_eq!(back.faces(), mesh.faces());
        assert_eq!(back.vertices(), mesh.vertices());
        assert_eq!(back.bones().len(), mesh.bones().len());
    }
}
