//! All-pairs surface distances on the mesh edge graph.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::TemplateMesh;
use crate::error::{Error, Result};

const CACHE_VERSION: u32 = 1;

/// Symmetric matrix of edge-graph shortest-path lengths.
#[derive(Debug, Clone, PartialEq)]
pub struct GeodesicTable {
    n: usize,
    dist: Vec<f32>,
    sigma_geo: f32,
}

#[derive(Clone, Copy, PartialEq)]
struct Entry {
    dist: f64,
    vertex: usize,
}

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        // Min-heap on distance.
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.vertex.cmp(&self.vertex))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Weighted adjacency with Euclidean edge lengths.
pub fn edge_graph(mesh: &TemplateMesh) -> Vec<Vec<(usize, f64)>> {
    let mut adj = vec![Vec::new(); mesh.vertex_count()];
    let v = mesh.vertices();
    for (a, b) in mesh.edges() {
        let w = (v[a] - v[b]).norm();
        adj[a].push((b, w));
        adj[b].push((a, w));
    }
    adj
}

/// Dijkstra from one source over the edge graph.
pub fn single_source(adj: &[Vec<(usize, f64)>], source: usize) -> Vec<f64> {
    let mut dist = vec![f64::INFINITY; adj.len()];
    let mut heap = BinaryHeap::new();
    dist[source] = 0.0;
    heap.push(Entry {
        dist: 0.0,
        vertex: source,
    });
    while let Some(Entry { dist: d, vertex: u }) = heap.pop() {
        if d > dist[u] {
            continue;
        }
        for &(v, w) in &adj[u] {
            let nd = d + w;
            if nd < dist[v] {
                dist[v] = nd;
                heap.push(Entry { dist: nd, vertex: v });
            }
        }
    }
    dist
}

pub fn compute_geodesics(mesh: &TemplateMesh) -> Result<GeodesicTable> {
    let adj = edge_graph(mesh);
    let n = adj.len();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|s| single_source(&adj, s))
        .collect();
    if let Some(first) = rows[0].iter().position(|d| !d.is_finite()) {
        let size = rows[first].iter().filter(|d| d.is_finite()).count();
        return Err(Error::Disconnected {
            first_vertex: first,
            size,
        });
    }
    let mut dist = vec![0f32; n * n];
    for (i, row) in rows.iter().enumerate() {
        for (j, &d) in row.iter().enumerate() {
            dist[i * n + j] = d as f32;
        }
    }
    // Round-off can make d(i,j) and d(j,i) differ in the last f64 bit;
    // symmetrize on the stored precision.
    for i in 0..n {
        for j in i + 1..n {
            let m = dist[i * n + j].min(dist[j * n + i]);
            dist[i * n + j] = m;
            dist[j * n + i] = m;
        }
    }
    Ok(GeodesicTable::from_matrix(n, dist))
}

impl GeodesicTable {
    /// Wraps a row-major `n x n` distance matrix.
    pub fn from_matrix(n: usize, dist: Vec<f32>) -> Self {
        assert_eq!(dist.len(), n * n, "distance matrix must be n x n");
        let sigma_geo = dist.iter().copied().fold(0.0f32, f32::max);
        Self { n, dist, sigma_geo }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn get(&self, a: usize, b: usize) -> f32 {
        self.dist[a * self.n + b]
    }

    pub fn row(&self, a: usize) -> &[f32] {
        &self.dist[a * self.n..(a + 1) * self.n]
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.dist
    }

    /// Largest pairwise distance on the surface.
    pub fn sigma_geo(&self) -> f32 {
        self.sigma_geo
    }

    /// Vertices within `radius` of `v` (inclusive), ascending by index.
    pub fn within(&self, v: usize, radius: f32) -> Vec<usize> {
        self.row(v)
            .iter()
            .enumerate()
            .filter(|(_, &d)| d <= radius)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        w.write_all(&(self.n as u32).to_le_bytes())?;
        w.write_all(&CACHE_VERSION.to_le_bytes())?;
        let mut buf = Vec::with_capacity(self.dist.len() * 4);
        for d in &self.dist {
            buf.extend_from_slice(&d.to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<Self> {
        let mut header = [0u8; 8];
        r.read_exact(&mut header)
            .map_err(|e| Error::CorruptCache(format!("header: {e}")))?;
        let n = u32::from_le_bytes(header[..4].try_into().expect("4 bytes")) as usize;
        let version = u32::from_le_bytes(header[4..].try_into().expect("4 bytes"));
        if version != CACHE_VERSION {
            return Err(Error::CorruptCache(format!(
                "format version {version}, expected {CACHE_VERSION}"
            )));
        }
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        if bytes.len() != n * n * 4 {
            return Err(Error::CorruptCache(format!(
                "{} payload bytes for {n} vertices",
                bytes.len()
            )));
        }
        let dist = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        Ok(Self::from_matrix(n, dist))
    }

    pub fn cache_path(dir: &Path, mesh: &TemplateMesh) -> PathBuf {
        dir.join(format!("geodesics-{}.bin", mesh.content_hash()))
    }

    /// Loads the table for `mesh` from `dir`, computing and storing it when
    /// absent or unreadable.
    pub fn load_or_compute(mesh: &TemplateMesh, dir: &Path) -> Result<Self> {
        let path = Self::cache_path(dir, mesh);
        if let Ok(file) = std::fs::File::open(&path) {
            match Self::read_from(std::io::BufReader::new(file)) {
                Ok(t) if t.n == mesh.vertex_count() => return Ok(t),
                Ok(_) | Err(_) => log::warn!("ignoring stale geodesic cache {}", path.display()),
            }
        }
        let table = compute_geodesics(mesh)?;
        std::fs::create_dir_all(dir)?;
        let tmp = path.with_extension("bin.tmp");
        {
            let mut f = std::io::BufWriter::new(std::fs::File::create(&tmp)?);
            table.write_to(&mut f)?;
            f.flush()?;
        }
        std::fs::rename(&tmp, &path)?;
        Ok(table)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{icosphere, unit_tetrahedron};

    #[test]
    fn tetrahedron_is_all_ones() {
        let g = compute_geodesics(&unit_tetrahedron()).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let expect = if i == j { 0.0 } else { 1.0 };
                assert!((g.get(i, j) - expect).abs() < 1e-6);
            }
        }
        assert!((g.sigma_geo() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn cache_round_trip() {
        let mesh = icosphere(1);
        let g = compute_geodesics(&mesh).unwrap();
        let mut buf = Vec::new();
        g.write_to(&mut buf).unwrap();
        assert_eq!(buf.len(), 8 + 42 * 42 * 4);
        assert_eq!(GeodesicTable::read_from(&buf[..]).unwrap(), g);
        assert!(GeodesicTable::read_from(&buf[..20]).is_err());
    }

    #[test]
    fn load_or_compute_writes_cache() {
        let dir = tempfile::tempdir().unwrap();
        let mesh = icosphere(1);
        let a = GeodesicTable::load_or_compute(&mesh, dir.path()).unwrap();
        assert!(GeodesicTable::cache_path(dir.path(), &mesh).exists());
        let b = GeodesicTable::load_or_compute(&mesh, dir.path()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn within_includes_self() {
        let g = compute_geodesics(&icosphere(1)).unwrap();
        let near = g.within(5, 0.0);
        assert_eq!(near, vec![5]);
    }
}
