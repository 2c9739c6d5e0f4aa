//! Unique continuous color code over template vertices.
//!
//! A vertex's color is its canonical position, min-max normalized per axis
//! to `[0, 255]` and rounded. Nearby surface points therefore get nearby
//! codes. Collisions are resolved deterministically and pure black stays
//! reserved for background.

use std::collections::HashMap;

use nalgebra::Point3;

use super::TemplateMesh;
use crate::error::{Error, Result};

pub type Rgb = [u8; 3];

/// Color reserved for "no correspondence".
pub const BACKGROUND: Rgb = [0, 0, 0];

/// Default L∞ bound on the color step across a mesh edge.
pub const DEFAULT_SMOOTHNESS_BOUND: u8 = 80;

const MAX_COLORS: usize = (1 << 24) - 1;
const CELL: i32 = 16;
const GRID: i32 = 256 / CELL;

#[derive(Debug, Clone)]
pub struct VertexColoring {
    colors: Vec<Rgb>,
    min_gap: u32,
    exact: HashMap<Rgb, usize>,
    /// Vertex indices bucketed by color cell, each bucket sorted.
    grid: Vec<Vec<u32>>,
}

impl PartialEq for VertexColoring {
    fn eq(&self, other: &Self) -> bool {
        self.colors == other.colors
    }
}

pub fn build_coloring(mesh: &TemplateMesh) -> Result<VertexColoring> {
    VertexColoring::from_positions(mesh.vertices())
}

fn pack(c: Rgb) -> usize {
    (c[0] as usize) << 16 | (c[1] as usize) << 8 | c[2] as usize
}

fn unpack(p: usize) -> Rgb {
    [(p >> 16) as u8, (p >> 8) as u8, p as u8]
}

struct ColorSet {
    bits: Vec<u64>,
}

impl ColorSet {
    fn new() -> Self {
        Self {
            bits: vec![0; (1 << 24) / 64],
        }
    }

    fn contains(&self, c: Rgb) -> bool {
        let p = pack(c);
        self.bits[p / 64] >> (p % 64) & 1 == 1
    }

    fn insert(&mut self, c: Rgb) {
        let p = pack(c);
        self.bits[p / 64] |= 1 << (p % 64);
    }

    fn first_free(&self) -> Option<Rgb> {
        (0..1usize << 24).map(unpack).find(|&c| !self.contains(c))
    }
}

impl VertexColoring {
    pub fn from_positions(positions: &[Point3<f64>]) -> Result<Self> {
        let n = positions.len();
        if n > MAX_COLORS {
            return Err(Error::TooManyVertices(n));
        }
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for p in positions {
            for a in 0..3 {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        let mut used = ColorSet::new();
        used.insert(BACKGROUND);
        let mut colors = Vec::with_capacity(n);
        for p in positions {
            let mut c: Rgb = [0; 3];
            for a in 0..3 {
                let extent = hi[a] - lo[a];
                let t = if extent > 0.0 { (p[a] - lo[a]) / extent } else { 0.0 };
                c[a] = (t * 255.0).round().clamp(0.0, 255.0) as u8;
            }
            while used.contains(c) {
                // Bump the channel with the most headroom; lowest channel on ties.
                let (ch, room) = (0..3)
                    .map(|a| (a, 255 - c[a]))
                    .fold((0, 0), |best, cur| if cur.1 > best.1 { cur } else { best });
                if room == 0 {
                    c = used.first_free().ok_or(Error::TooManyVertices(n))?;
                    break;
                }
                c[ch] += 1;
            }
            used.insert(c);
            colors.push(c);
        }
        Ok(Self::from_colors(colors))
    }

    /// Wraps an explicit color table. Colors must be pairwise distinct and
    /// never black; violations panic since they break decoding.
    pub fn from_colors(colors: Vec<Rgb>) -> Self {
        let mut exact = HashMap::with_capacity(colors.len());
        let mut grid = vec![Vec::new(); (GRID * GRID * GRID) as usize];
        for (v, &c) in colors.iter().enumerate() {
            assert_ne!(c, BACKGROUND, "vertex {v} has the reserved background color");
            let prev = exact.insert(c, v);
            assert!(prev.is_none(), "duplicate color {c:?}");
            grid[cell_index(cell_of(c))].push(v as u32);
        }
        let min_gap = min_linf_gap(&colors);
        Self {
            colors,
            min_gap,
            exact,
            grid,
        }
    }

    pub fn colors(&self) -> &[Rgb] {
        &self.colors
    }

    pub fn len(&self) -> usize {
        self.colors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.colors.is_empty()
    }

    /// Smallest L∞ distance between any two vertex colors.
    pub fn min_gap(&self) -> u32 {
        self.min_gap
    }

    /// Largest L∞ radius `r` around every stored color that is guaranteed
    /// to decode back to it: `(min_gap - r)^2 > 3 r^2`. Euclidean decoding
    /// cannot promise `floor((min_gap - 1) / 2)` once the gap reaches 5.
    pub fn robust_radius(&self) -> u32 {
        let g = self.min_gap as u64;
        (0..g).take_while(|&r| (g - r) * (g - r) > 3 * r * r).last().unwrap_or(0) as u32
    }

    pub fn vertex_to_color(&self, v: usize) -> Result<Rgb> {
        self.colors.get(v).copied().ok_or(Error::VertexOutOfRange {
            index: v,
            count: self.colors.len(),
        })
    }

    /// Nearest vertex by Euclidean color distance; ties go to the lowest index.
    pub fn color_to_vertex(&self, c: Rgb) -> usize {
        if let Some(&v) = self.exact.get(&c) {
            return v;
        }
        self.nearest(c.map(f64::from))
    }

    /// Same as [`color_to_vertex`](Self::color_to_vertex) for a real-valued
    /// color; channels are clamped to `[0, 255]` first.
    pub fn real_color_to_vertex(&self, c: [f64; 3]) -> usize {
        self.nearest(c.map(|x| x.clamp(0.0, 255.0)))
    }

    fn nearest(&self, c: [f64; 3]) -> usize {
        let center = c.map(|x| ((x as i32) / CELL).min(GRID - 1));
        let mut best: Option<(f64, usize)> = None;
        for ring in 0..GRID {
            for cell in ring_cells(center, ring) {
                for &v in &self.grid[cell_index(cell)] {
                    let d = real_dist2(c, self.colors[v as usize]);
                    let v = v as usize;
                    if best.is_none_or(|(bd, bv)| d < bd || (d == bd && v < bv)) {
                        best = Some((d, v));
                    }
                }
            }
            // Colors in cells at Chebyshev ring r+1 or beyond are more than
            // r * CELL away along some axis, hence strictly farther in L2.
            if let Some((d, _)) = best {
                let reach = (ring * CELL) as f64;
                if d <= reach * reach {
                    break;
                }
            }
        }
        best.map(|b| b.1).expect("coloring has at least one vertex")
    }

    /// Largest L∞ color difference across any mesh edge.
    pub fn max_edge_delta(&self, mesh: &TemplateMesh) -> u8 {
        mesh.edges()
            .into_iter()
            .map(|(a, b)| linf(self.colors[a], self.colors[b]))
            .max()
            .unwrap_or(0) as u8
    }

    pub fn is_smooth(&self, mesh: &TemplateMesh, bound: u8) -> bool {
        self.max_edge_delta(mesh) <= bound
    }
}

pub fn linf(a: Rgb, b: Rgb) -> u32 {
    (0..3).map(|i| a[i].abs_diff(b[i]) as u32).max().unwrap_or(0)
}

#[cfg(test)]
fn int_dist2(a: Rgb, b: Rgb) -> i32 {
    (0..3).map(|i| (a[i] as i32 - b[i] as i32).pow(2)).sum()
}

fn real_dist2(a: [f64; 3], b: Rgb) -> f64 {
    (0..3).map(|i| (a[i] - b[i] as f64).powi(2)).sum()
}

fn cell_of(c: Rgb) -> [i32; 3] {
    c.map(|x| x as i32 / CELL)
}

fn cell_index(c: [i32; 3]) -> usize {
    ((c[0] * GRID + c[1]) * GRID + c[2]) as usize
}

fn ring_cells(center: [i32; 3], ring: i32) -> impl Iterator<Item = [i32; 3]> {
    let range = move |c: i32| (c - ring).max(0)..=(c + ring).min(GRID - 1);
    range(center[0]).flat_map(move |x| {
        range(center[1]).flat_map(move |y| {
            range(center[2]).filter_map(move |z| {
                let d = (x - center[0])
                    .abs()
                    .max((y - center[1]).abs())
                    .max((z - center[2]).abs());
                (d == ring).then_some([x, y, z])
            })
        })
    })
}

fn min_linf_gap(colors: &[Rgb]) -> u32 {
    if colors.len() < 2 {
        return 256;
    }
    let mut sorted: Vec<Rgb> = colors.to_vec();
    sorted.sort_unstable();
    let mut best = u32::MAX;
    // Sorted by red: once the red gap alone reaches `best`, stop scanning.
    for i in 0..sorted.len() {
        for j in i + 1..sorted.len() {
            let dr = (sorted[j][0] - sorted[i][0]) as u32;
            if dr >= best {
                break;
            }
            best = best.min(linf(sorted[i], sorted[j]));
        }
    }
    best
}
