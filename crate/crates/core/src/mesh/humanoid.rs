//! Procedural rigged humanoid in T-pose (y up, +z forward, ~1.7 units tall).
//!
//! Every body segment is a capped tube around a straight axis. A child tube
//! is stitched to its parent with a single bridge triangle from its start
//! pole, which keeps the edge graph connected.

use nalgebra::{Isometry3, Point3, Translation3, Vector3};

use super::{Bone, BodyPart, SkinWeights, TemplateMesh};

struct Segment {
    bone: usize,
    /// Bone whose weight fades in near the start of the tube.
    blend_bone: Option<usize>,
    /// Segment this tube is stitched to.
    attach_to: Option<usize>,
    start: Point3<f64>,
    end: Point3<f64>,
    radii: (f64, f64),
    rings: usize,
    sides: usize,
    part: BodyPart,
    profile: Profile,
}

#[derive(Clone, Copy)]
enum Profile {
    Capsule,
    Sphere,
}

impl Profile {
    fn scale(self, t: f64) -> f64 {
        match self {
            Profile::Capsule => (1.0 - (2.0 * t - 1.0).abs().powi(6)).max(0.0).sqrt(),
            Profile::Sphere => (std::f64::consts::PI * t).sin(),
        }
    }
}

const BONES: &[(&str, Option<usize>, [f64; 3])] = &[
    ("pelvis", None, [0.0, 0.95, 0.0]),
    ("spine", Some(0), [0.0, 1.18, 0.0]),
    ("head", Some(1), [0.0, 1.50, 0.0]),
    ("upper_arm.l", Some(1), [0.19, 1.41, 0.0]),
    ("forearm.l", Some(3), [0.47, 1.41, 0.0]),
    ("hand.l", Some(4), [0.73, 1.41, 0.0]),
    ("upper_arm.r", Some(1), [-0.19, 1.41, 0.0]),
    ("forearm.r", Some(6), [-0.47, 1.41, 0.0]),
    ("hand.r", Some(7), [-0.73, 1.41, 0.0]),
    ("thigh.l", Some(0), [0.09, 0.90, 0.0]),
    ("shin.l", Some(9), [0.09, 0.50, 0.0]),
    ("foot.l", Some(10), [0.09, 0.08, 0.0]),
    ("thigh.r", Some(0), [-0.09, 0.90, 0.0]),
    ("shin.r", Some(12), [-0.09, 0.50, 0.0]),
    ("foot.r", Some(13), [-0.09, 0.08, 0.0]),
];

fn segments() -> Vec<Segment> {
    let p = Point3::new;
    let mut segs = vec![
        Segment {
            bone: 0,
            blend_bone: None,
            attach_to: None,
            start: p(0.0, 0.80, 0.0),
            end: p(0.0, 1.50, 0.0),
            radii: (0.165, 0.105),
            rings: 15,
            sides: 16,
            part: BodyPart::Torso,
            profile: Profile::Capsule,
        },
        Segment {
            bone: 2,
            blend_bone: Some(1),
            attach_to: Some(0),
            start: p(0.0, 1.44, 0.0),
            end: p(0.0, 1.72, 0.01),
            radii: (0.095, 0.105),
            rings: 9,
            sides: 12,
            part: BodyPart::Head,
            profile: Profile::Sphere,
        },
    ];
    for side in [1.0, -1.0] {
        let (ua, fa, hand, thigh, shin, foot) = if side > 0.0 {
            (3, 4, 5, 9, 10, 11)
        } else {
            (6, 7, 8, 12, 13, 14)
        };
        let torso = 0;
        let base = segs.len();
        segs.extend([
            Segment {
                bone: ua,
                blend_bone: Some(1),
                attach_to: Some(torso),
                start: p(side * 0.15, 1.41, 0.0),
                end: p(side * 0.49, 1.41, 0.0),
                radii: (0.048, 0.048),
                rings: 7,
                sides: 10,
                part: BodyPart::UpperArm,
                profile: Profile::Capsule,
            },
            Segment {
                bone: fa,
                blend_bone: Some(ua),
                attach_to: Some(base),
                start: p(side * 0.45, 1.41, 0.0),
                end: p(side * 0.75, 1.41, 0.0),
                radii: (0.040, 0.040),
                rings: 7,
                sides: 10,
                part: BodyPart::Forearm,
                profile: Profile::Capsule,
            },
            Segment {
                bone: hand,
                blend_bone: Some(fa),
                attach_to: Some(base + 1),
                start: p(side * 0.72, 1.41, 0.0),
                end: p(side * 0.91, 1.40, 0.0),
                radii: (0.022, 0.050),
                rings: 5,
                sides: 8,
                part: BodyPart::Hand,
                profile: Profile::Capsule,
            },
            Segment {
                bone: thigh,
                blend_bone: Some(0),
                attach_to: Some(torso),
                start: p(side * 0.09, 0.93, 0.0),
                end: p(side * 0.09, 0.48, 0.0),
                radii: (0.075, 0.075),
                rings: 8,
                sides: 10,
                part: BodyPart::Thigh,
                profile: Profile::Capsule,
            },
            Segment {
                bone: shin,
                blend_bone: Some(thigh),
                attach_to: Some(base + 3),
                start: p(side * 0.09, 0.53, 0.0),
                end: p(side * 0.09, 0.06, 0.0),
                radii: (0.052, 0.052),
                rings: 8,
                sides: 10,
                part: BodyPart::Shin,
                profile: Profile::Capsule,
            },
            Segment {
                bone: foot,
                blend_bone: Some(shin),
                attach_to: Some(base + 4),
                start: p(side * 0.09, 0.045, -0.05),
                end: p(side * 0.09, 0.035, 0.19),
                radii: (0.045, 0.035),
                rings: 5,
                sides: 8,
                part: BodyPart::Foot,
                profile: Profile::Capsule,
            },
        ]);
    }
    segs
}

fn smoothstep(x: f64) -> f64 {
    let x = x.clamp(0.0, 1.0);
    x * x * (3.0 - 2.0 * x)
}

/// Orthonormal cross-section axes for a tube along `axis`.
fn cross_axes(axis: Vector3<f64>) -> (Vector3<f64>, Vector3<f64>) {
    let a = axis.normalize();
    let helper = if a.y.abs() > 0.9 {
        Vector3::x()
    } else {
        Vector3::y()
    };
    let u = (helper - a * a.dot(&helper)).normalize();
    let w = a.cross(&u);
    (u, w)
}

pub(super) fn build() -> TemplateMesh {
    let bones: Vec<Bone> = BONES
        .iter()
        .map(|&(name, parent, j)| Bone {
            name: name.to_string(),
            parent,
            rest: Isometry3::from_parts(Translation3::new(j[0], j[1], j[2]), Default::default()),
        })
        .collect();

    let mut vertices = Vec::new();
    let mut faces: Vec<[usize; 3]> = Vec::new();
    let mut weights: Vec<SkinWeights> = Vec::new();
    let mut parts = Vec::new();
    // (start pole, first ring offset, sides) per segment.
    let mut layout: Vec<(usize, usize, usize)> = Vec::new();

    for seg in segments() {
        let axis = seg.end - seg.start;
        let (u, w) = cross_axes(axis);
        let start_pole = vertices.len();
        let total = seg.rings + 1;

        let push = |p: Point3<f64>, t: f64, vertices: &mut Vec<Point3<f64>>, weights: &mut Vec<SkinWeights>, parts: &mut Vec<BodyPart>| {
            vertices.push(p);
            parts.push(seg.part);
            let row = match seg.blend_bone {
                Some(b) => {
                    let wp = 0.5 * (1.0 - smoothstep(t / 0.3));
                    if wp > 0.0 {
                        vec![(seg.bone, 1.0 - wp), (b, wp)]
                    } else {
                        vec![(seg.bone, 1.0)]
                    }
                }
                None => {
                    // Torso: pelvis below the waist, spine above.
                    let ws = smoothstep((p.y - 1.02) / 0.22);
                    if ws <= 0.0 {
                        vec![(0, 1.0)]
                    } else if ws >= 1.0 {
                        vec![(1, 1.0)]
                    } else {
                        vec![(0, 1.0 - ws), (1, ws)]
                    }
                }
            };
            weights.push(row);
        };

        push(seg.start, 0.0, &mut vertices, &mut weights, &mut parts);
        let ring0 = vertices.len();
        for r in 1..total {
            let t = r as f64 / total as f64;
            let s = seg.profile.scale(t);
            let center = seg.start + axis * t;
            for k in 0..seg.sides {
                let theta = 2.0 * std::f64::consts::PI * k as f64 / seg.sides as f64;
                let offset = u * (seg.radii.0 * s * theta.cos()) + w * (seg.radii.1 * s * theta.sin());
                push(center + offset, t, &mut vertices, &mut weights, &mut parts);
            }
        }
        let end_pole = vertices.len();
        push(seg.end, 1.0, &mut vertices, &mut weights, &mut parts);

        let ring = |r: usize, k: usize| ring0 + r * seg.sides + (k % seg.sides);
        for k in 0..seg.sides {
            faces.push([start_pole, ring(0, k + 1), ring(0, k)]);
        }
        for r in 0..seg.rings - 1 {
            for k in 0..seg.sides {
                faces.push([ring(r, k), ring(r, k + 1), ring(r + 1, k + 1)]);
                faces.push([ring(r, k), ring(r + 1, k + 1), ring(r + 1, k)]);
            }
        }
        let last = seg.rings - 1;
        for k in 0..seg.sides {
            faces.push([end_pole, ring(last, k), ring(last, k + 1)]);
        }

        if let Some(parent) = seg.attach_to {
            let (_, p_ring0, p_sides) = layout[parent];
            let p_end = if parent + 1 < layout.len() {
                layout[parent + 1].0
            } else {
                start_pole
            };
            // Nearest ring vertex of the parent, bridged with its ring successor.
            let pole = vertices[start_pole];
            let nearest = (p_ring0..p_end - 1)
                .min_by(|&a, &b| {
                    (vertices[a] - pole)
                        .norm()
                        .total_cmp(&(vertices[b] - pole).norm())
                        .then(a.cmp(&b))
                })
                .expect("parent ring is nonempty");
            let k = (nearest - p_ring0) % p_sides;
            let next = nearest - k + (k + 1) % p_sides;
            faces.push([start_pole, nearest, next]);
        }
        layout.push((start_pole, ring0, seg.sides));
    }

    TemplateMesh::new(vertices, faces, bones, weights, Some(parts))
        .expect("generated humanoid satisfies mesh invariants")
}
