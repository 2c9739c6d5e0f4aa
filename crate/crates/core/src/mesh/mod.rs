//! The articulated template surface every correspondence refers to.
//!
//! A [`TemplateMesh`] holds the canonical (rest pose) geometry, a bone
//! hierarchy and per-vertex skinning weights. The unique per-vertex color
//! code lives in [`coloring`], pairwise surface distances in [`geodesic`].

pub mod coloring;
pub mod geodesic;
mod humanoid;
pub mod io;

use std::collections::BTreeSet;

use nalgebra::{Isometry3, Point3, Vector3};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub use coloring::VertexColoring;
pub use geodesic::GeodesicTable;

/// Tolerance on the per-vertex skin weight sum.
pub const WEIGHT_SUM_TOLERANCE: f64 = 1e-6;

/// Coarse anatomical label of a vertex, used for per-pixel loss weighting
/// and for picking garment regions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BodyPart {
    Head,
    Torso,
    UpperArm,
    Forearm,
    Hand,
    Thigh,
    Shin,
    Foot,
    Other,
}

impl BodyPart {
    /// Parts that receive the higher classification weight.
    pub fn is_fine_detail(self) -> bool {
        matches!(self, BodyPart::Head | BodyPart::Hand)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bone {
    pub name: String,
    pub parent: Option<usize>,
    /// Bone frame expressed in canonical space; the translation is the joint.
    pub rest: Isometry3<f64>,
}

impl Bone {
    pub fn joint(&self) -> Point3<f64> {
        Point3::from(self.rest.translation.vector)
    }
}

/// Sparse skinning weights of one vertex: `(bone index, weight)` pairs.
pub type SkinWeights = Vec<(usize, f64)>;

#[derive(Debug, Clone, PartialEq)]
pub struct TemplateMesh {
    vertices: Vec<Point3<f64>>,
    faces: Vec<[usize; 3]>,
    bones: Vec<Bone>,
    skin_weights: Vec<SkinWeights>,
    parts: Vec<BodyPart>,
}

impl TemplateMesh {
    /// Builds a mesh and checks every structural invariant: face indices in
    /// range, no degenerate faces, a connected edge graph, bones ordered
    /// parent-first, and nonnegative skin weights summing to one.
    pub fn new(
        vertices: Vec<Point3<f64>>,
        faces: Vec<[usize; 3]>,
        bones: Vec<Bone>,
        skin_weights: Vec<SkinWeights>,
        parts: Option<Vec<BodyPart>>,
    ) -> Result<Self> {
        let n = vertices.len();
        if n == 0 {
            return Err(Error::InvalidMesh("mesh has no vertices".into()));
        }
        for (i, v) in vertices.iter().enumerate() {
            if !v.coords.iter().all(|c| c.is_finite()) {
                return Err(Error::InvalidMesh(format!("vertex {i} is not finite")));
            }
        }
        for (fi, f) in faces.iter().enumerate() {
            if let Some(&bad) = f.iter().find(|&&i| i >= n) {
                return Err(Error::InvalidMesh(format!(
                    "face {fi} references vertex {bad} but mesh has {n} vertices"
                )));
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(Error::InvalidMesh(format!("face {fi} is degenerate: {f:?}")));
            }
        }
        if bones.is_empty() {
            return Err(Error::InvalidMesh("mesh has no bones".into()));
        }
        for (bi, b) in bones.iter().enumerate() {
            if let Some(p) = b.parent {
                if p >= bi {
                    return Err(Error::InvalidMesh(format!(
                        "bone {bi} ({}) has parent {p}; parents must precede children",
                        b.name
                    )));
                }
            }
        }
        if skin_weights.len() != n {
            return Err(Error::InvalidMesh(format!(
                "{} skin weight rows for {n} vertices",
                skin_weights.len()
            )));
        }
        for (vi, row) in skin_weights.iter().enumerate() {
            if row.is_empty() {
                return Err(Error::InvalidMesh(format!("vertex {vi} has no skin weights")));
            }
            let mut sum = 0.0;
            for &(b, w) in row {
                if b >= bones.len() {
                    return Err(Error::InvalidMesh(format!(
                        "vertex {vi} weights bone {b} but there are {} bones",
                        bones.len()
                    )));
                }
                if !(w >= 0.0) || !w.is_finite() {
                    return Err(Error::InvalidMesh(format!(
                        "vertex {vi} has invalid weight {w} for bone {b}"
                    )));
                }
                sum += w;
            }
            if (sum - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
                return Err(Error::InvalidMesh(format!(
                    "skin weights of vertex {vi} sum to {sum}"
                )));
            }
        }
        let parts = parts.unwrap_or_else(|| vec![BodyPart::Other; n]);
        if parts.len() != n {
            return Err(Error::InvalidMesh(format!(
                "{} part labels for {n} vertices",
                parts.len()
            )));
        }
        let mesh = Self {
            vertices,
            faces,
            bones,
            skin_weights,
            parts,
        };
        if let Some((first_vertex, size)) = mesh.first_unreachable_component() {
            return Err(Error::Disconnected { first_vertex, size });
        }
        Ok(mesh)
    }

    /// A mesh rigged to a single root bone at the origin, every vertex fully
    /// weighted to it. Handy for geometry that is never posed.
    pub fn unrigged(vertices: Vec<Point3<f64>>, faces: Vec<[usize; 3]>) -> Result<Self> {
        let n = vertices.len();
        let root = Bone {
            name: "root".into(),
            parent: None,
            rest: Isometry3::identity(),
        };
        Self::new(vertices, faces, vec![root], vec![vec![(0, 1.0)]; n], None)
    }

    /// The shipped desk-scale humanoid template.
    pub fn builtin() -> Self {
        const OBJ: &str = include_str!("../../assets/template.obj");
        const RIG: &str = include_str!("../../assets/template.rig.json");
        io::parse_mesh(OBJ, RIG, "template").expect("shipped template asset is valid")
    }

    /// Procedurally generates the humanoid that backs [`TemplateMesh::builtin`].
    pub fn humanoid() -> Self {
        humanoid::build()
    }

    pub fn vertices(&self) -> &[Point3<f64>] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    pub fn bones(&self) -> &[Bone] {
        &self.bones
    }

    pub fn skin_weights(&self) -> &[SkinWeights] {
        &self.skin_weights
    }

    pub fn parts(&self) -> &[BodyPart] {
        &self.parts
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    /// Same topology, rig and labels with new vertex positions.
    pub fn with_vertices(&self, vertices: Vec<Point3<f64>>) -> Result<Self> {
        if vertices.len() != self.vertices.len() {
            return Err(Error::Shape(format!(
                "{} replacement vertices for a mesh of {}",
                vertices.len(),
                self.vertices.len()
            )));
        }
        Ok(Self {
            vertices,
            ..self.clone()
        })
    }

    /// Unique undirected edges `(a, b)` with `a < b`, sorted.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut set = BTreeSet::new();
        for f in &self.faces {
            for k in 0..3 {
                let (a, b) = (f[k], f[(k + 1) % 3]);
                set.insert((a.min(b), a.max(b)));
            }
        }
        set.into_iter().collect()
    }

    /// Adjacency lists, each sorted by neighbor index.
    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.vertices.len()];
        for (a, b) in self.edges() {
            adj[a].push(b);
            adj[b].push(a);
        }
        for row in &mut adj {
            row.sort_unstable();
        }
        adj
    }

    pub fn mean_edge_length(&self) -> f64 {
        let edges = self.edges();
        if edges.is_empty() {
            return 0.0;
        }
        let total: f64 = edges
            .iter()
            .map(|&(a, b)| (self.vertices[a] - self.vertices[b]).norm())
            .sum();
        total / edges.len() as f64
    }

    /// Area-weighted vertex normals. Vertices not touched by any face get +y.
    pub fn vertex_normals(&self) -> Vec<Vector3<f64>> {
        let mut normals = vec![Vector3::zeros(); self.vertices.len()];
        for f in &self.faces {
            let [a, b, c] = f.map(|i| self.vertices[i]);
            let n = (b - a).cross(&(c - a));
            for &i in f {
                normals[i] += n;
            }
        }
        normals
            .into_iter()
            .map(|n| n.try_normalize(1e-12).unwrap_or_else(Vector3::y))
            .collect()
    }

    /// Stable content hash over positions and faces, used to key caches and
    /// to tie datasets to the mesh that produced them.
    pub fn content_hash(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update((self.vertices.len() as u64).to_le_bytes());
        for v in &self.vertices {
            for c in v.coords.iter() {
                hasher.update(c.to_le_bytes());
            }
        }
        hasher.update((self.faces.len() as u64).to_le_bytes());
        for f in &self.faces {
            for &i in f {
                hasher.update((i as u64).to_le_bytes());
            }
        }
        let digest = hasher.finalize();
        digest.iter().take(16).map(|b| format!("{b:02x}")).collect()
    }

    /// Extracts the faces whose three vertices all satisfy `keep`, re-indexed
    /// into a standalone mesh that inherits rig and labels. Returns the
    /// submesh and, for each of its vertices, the source vertex index.
    ///
    /// Only the largest connected piece is kept, so the result is always a
    /// valid (connected) mesh.
    pub fn submesh(&self, keep: impl Fn(usize) -> bool) -> Result<(Self, Vec<usize>)> {
        let faces: Vec<[usize; 3]> = self
            .faces
            .iter()
            .copied()
            .filter(|f| f.iter().all(|&i| keep(i)))
            .collect();
        if faces.is_empty() {
            return Err(Error::InvalidMesh("submesh selection contains no faces".into()));
        }
        // Largest connected component over the selected faces.
        let mut uf = UnionFind::new(self.vertices.len());
        for f in &faces {
            uf.union(f[0], f[1]);
            uf.union(f[1], f[2]);
        }
        let mut counts = std::collections::BTreeMap::new();
        for f in &faces {
            *counts.entry(uf.find(f[0])).or_insert(0usize) += 1;
        }
        let best = counts
            .iter()
            .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
            .map(|(&root, _)| root)
            .expect("nonempty");
        let faces: Vec<[usize; 3]> = faces.into_iter().filter(|f| uf.find(f[0]) == best).collect();

        let mut remap = vec![usize::MAX; self.vertices.len()];
        let mut source = Vec::new();
        for f in &faces {
            for &i in f {
                if remap[i] == usize::MAX {
                    remap[i] = source.len();
                    source.push(i);
                }
            }
        }
        // Keep vertex order stable with respect to the parent mesh.
        source.sort_unstable();
        for (new, &old) in source.iter().enumerate() {
            remap[old] = new;
        }
        let vertices = source.iter().map(|&i| self.vertices[i]).collect();
        let faces = faces.iter().map(|f| f.map(|i| remap[i])).collect();
        let weights = source.iter().map(|&i| self.skin_weights[i].clone()).collect();
        let parts = source.iter().map(|&i| self.parts[i]).collect();
        let mesh = Self::new(vertices, faces, self.bones.clone(), weights, Some(parts))?;
        Ok((mesh, source))
    }

    /// `(first vertex, size)` of some component not containing vertex 0.
    fn first_unreachable_component(&self) -> Option<(usize, usize)> {
        let mut uf = UnionFind::new(self.vertices.len());
        for f in &self.faces {
            uf.union(f[0], f[1]);
            uf.union(f[1], f[2]);
        }
        let root0 = uf.find(0);
        let first = (0..self.vertices.len()).find(|&v| uf.find(v) != root0)?;
        let r = uf.find(first);
        let size = (0..self.vertices.len()).filter(|&v| uf.find(v) == r).count();
        Some((first, size))
    }
}

/// A template together with its color code and distance table: everything
/// needed to encode, decode and compare correspondences.
#[derive(Debug, Clone)]
pub struct Surface {
    pub mesh: TemplateMesh,
    pub coloring: VertexColoring,
    pub geodesics: GeodesicTable,
    mean_edge: f64,
}

impl Surface {
    pub fn new(mesh: TemplateMesh) -> Result<Self> {
        let coloring = coloring::build_coloring(&mesh)?;
        let geodesics = geodesic::compute_geodesics(&mesh)?;
        Ok(Self::from_parts(mesh, coloring, geodesics))
    }

    /// Like [`Surface::new`] with the geodesic table cached under `dir`.
    pub fn with_cache(mesh: TemplateMesh, dir: &std::path::Path) -> Result<Self> {
        let coloring = coloring::build_coloring(&mesh)?;
        let geodesics = GeodesicTable::load_or_compute(&mesh, dir)?;
        Ok(Self::from_parts(mesh, coloring, geodesics))
    }

    pub fn from_parts(mesh: TemplateMesh, coloring: VertexColoring, geodesics: GeodesicTable) -> Self {
        let mean_edge = mesh.mean_edge_length();
        Self {
            mesh,
            coloring,
            geodesics,
            mean_edge,
        }
    }

    pub fn builtin() -> Self {
        Self::new(TemplateMesh::builtin()).expect("shipped template is valid")
    }

    pub fn mean_edge_length(&self) -> f64 {
        self.mean_edge
    }

    pub fn sigma_geo(&self) -> f32 {
        self.geodesics.sigma_geo()
    }

    /// Vertex of a foreground color; `None` for the background color.
    pub fn decode(&self, c: coloring::Rgb) -> Option<usize> {
        (c != coloring::BACKGROUND).then(|| self.coloring.color_to_vertex(c))
    }

    pub fn color(&self, v: usize) -> coloring::Rgb {
        self.coloring.colors()[v]
    }
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = (ra.min(rb), ra.max(rb));
            self.parent[hi] = lo;
        }
    }
}

/// Regular tetrahedron with unit edges; the smallest closed mesh.
pub fn unit_tetrahedron() -> TemplateMesh {
    let h = (2.0f64 / 3.0).sqrt();
    let r = 1.0 / 3.0f64.sqrt();
    let vertices = vec![
        Point3::new(r, 0.0, 0.0),
        Point3::new(-r / 2.0, 0.0, 0.5),
        Point3::new(-r / 2.0, 0.0, -0.5),
        Point3::new(0.0, h, 0.0),
    ];
    let faces = vec![[0, 2, 1], [0, 1, 3], [1, 2, 3], [2, 0, 3]];
    TemplateMesh::unrigged(vertices, faces).expect("tetrahedron is valid")
}

/// Icosphere of radius one after `subdivisions` rounds of 4:1 splitting
/// (12, 42, 162, 642, ... vertices).
pub fn icosphere(subdivisions: usize) -> TemplateMesh {
    let t = (1.0 + 5.0f64.sqrt()) / 2.0;
    let mut vertices: Vec<Point3<f64>> = [
        (-1.0, t, 0.0),
        (1.0, t, 0.0),
        (-1.0, -t, 0.0),
        (1.0, -t, 0.0),
        (0.0, -1.0, t),
        (0.0, 1.0, t),
        (0.0, -1.0, -t),
        (0.0, 1.0, -t),
        (t, 0.0, -1.0),
        (t, 0.0, 1.0),
        (-t, 0.0, -1.0),
        (-t, 0.0, 1.0),
    ]
    .iter()
    .map(|&(x, y, z)| Point3::from(Vector3::new(x, y, z).normalize()))
    .collect();
    let mut faces: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..subdivisions {
        let mut midpoints = std::collections::HashMap::new();
        let mut midpoint = |a: usize, b: usize, verts: &mut Vec<Point3<f64>>| -> usize {
            *midpoints.entry((a.min(b), a.max(b))).or_insert_with(|| {
                let m = (verts[a].coords + verts[b].coords).normalize();
                verts.push(Point3::from(m));
                verts.len() - 1
            })
        };
        let mut next = Vec::with_capacity(faces.len() * 4);
        for [a, b, c] in faces {
            let ab = midpoint(a, b, &mut vertices);
            let bc = midpoint(b, c, &mut vertices);
            let ca = midpoint(c, a, &mut vertices);
            next.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    TemplateMesh::unrigged(vertices, faces).expect("icosphere is valid")
}
