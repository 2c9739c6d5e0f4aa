//! Evaluation: pixel accuracy within square error windows, geodesic point
//! similarity with AP/AR over its thresholds, and temporal consistency.

pub mod plot;

use std::collections::BTreeMap;

use image::RgbImage;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Mask;
use crate::mesh::geodesic::GeodesicTable;
use crate::mesh::Surface;
use crate::synth::Sample;

/// GPS bandwidth in units of `sigma_geo`.
pub const DEFAULT_KAPPA: f64 = 0.255;
/// Temporal match tolerance in units of `sigma_geo`.
pub const DEFAULT_TAU: f64 = 0.05;
pub const DEFAULT_WINDOWS: [u32; 4] = [0, 5, 10, 20];
pub const DEFAULT_INTERVALS: [usize; 2] = [1, 12];

/// `0.50, 0.55, ..., 0.95`.
pub fn default_thresholds() -> Vec<f64> {
    (0..10).map(|i| 0.5 + 0.05 * i as f64).collect()
}

/// For every vertex, the GT pixels showing it.
struct VertexPixels(Vec<Vec<(u32, u32)>>);

impl VertexPixels {
    fn new(gt: &RgbImage, mask: &Mask, surface: &Surface) -> Self {
        let mut out = vec![Vec::new(); surface.mesh.vertex_count()];
        for (x, y) in mask.pixels() {
            if let Some(v) = surface.decode(gt.get_pixel(x, y).0) {
                out[v].push((x, y));
            }
        }
        Self(out)
    }

    fn within(&self, v: usize, x: u32, y: u32, window: u32) -> bool {
        self.0[v]
            .iter()
            .any(|&(qx, qy)| qx.abs_diff(x) <= window && qy.abs_diff(y) <= window)
    }
}

fn correct_counts(pred: &RgbImage, gt: &RgbImage, mask: &Mask, surface: &Surface, windows: &[u32]) -> Result<Vec<usize>> {
    if mask.is_empty() {
        return Err(Error::EmptyMask("pixel_accuracy"));
    }
    if pred.dimensions() != mask.dims() || gt.dimensions() != mask.dims() {
        return Err(Error::Shape("pixel_accuracy: image sizes differ".into()));
    }
    let index = VertexPixels::new(gt, mask, surface);
    let mut counts = vec![0; windows.len()];
    for (x, y) in mask.pixels() {
        // A background-colored prediction names no vertex.
        let Some(v) = surface.decode(pred.get_pixel(x, y).0) else {
            continue;
        };
        for (c, &w) in counts.iter_mut().zip(windows) {
            if index.within(v, x, y, w) {
                *c += 1;
            }
        }
    }
    Ok(counts)
}

/// Percentage of mask pixels whose predicted vertex appears in the GT
/// within an `L∞` window of `window` pixels.
pub fn pixel_accuracy(pred: &RgbImage, gt: &RgbImage, mask: &Mask, surface: &Surface, window: u32) -> Result<f64> {
    let c = correct_counts(pred, gt, mask, surface, &[window])?;
    Ok(100.0 * c[0] as f64 / mask.count() as f64)
}

/// Geodesic point similarity: mean of `exp(-g² / 2κ²)` over point pairs.
pub fn gps(pred: &[usize], gt: &[usize], geodesics: &GeodesicTable, kappa: f64) -> Result<f64> {
    if pred.len() != gt.len() {
        return Err(Error::Shape(format!("gps: {} predictions for {} points", pred.len(), gt.len())));
    }
    if gt.is_empty() {
        return Err(Error::EmptyMask("gps (no annotated points)"));
    }
    if !(kappa > 0.0) {
        return Err(Error::Config(format!("kappa must be positive, got {kappa}")));
    }
    let sum: f64 = pred
        .iter()
        .zip(gt)
        .map(|(&p, &g)| {
            let d = geodesics.get(p, g) as f64;
            (-d * d / (2.0 * kappa * kappa)).exp()
        })
        .sum();
    Ok(sum / gt.len() as f64)
}

/// One GT instance as seen by AP/AR: its GPS when the model predicted it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InstanceScore {
    pub gps: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdRow {
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApAr {
    pub ap: f64,
    pub ar: f64,
    pub per_threshold: Vec<ThresholdRow>,
}

/// Precision and recall of "GPS > t" per threshold, and their means.
/// Instances are given, so precision divides by predicted instances and
/// recall by all instances.
pub fn ap_ar_over_gps(instances: &[InstanceScore], thresholds: &[f64]) -> Result<ApAr> {
    if instances.is_empty() {
        return Err(Error::EmptyMask("ap_ar_over_gps (no instances)"));
    }
    if thresholds.is_empty() || thresholds.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::Config("thresholds must be a nonempty ascending list".into()));
    }
    let predicted = instances.iter().filter(|i| i.gps.is_some()).count();
    let per_threshold: Vec<ThresholdRow> = thresholds
        .iter()
        .map(|&t| {
            let tp = instances.iter().filter(|i| i.gps.is_some_and(|g| g > t)).count();
            ThresholdRow {
                threshold: t,
                precision: if predicted == 0 { 0.0 } else { tp as f64 / predicted as f64 },
                recall: tp as f64 / instances.len() as f64,
            }
        })
        .collect();
    let n = per_threshold.len() as f64;
    Ok(ApAr {
        ap: per_threshold.iter().map(|r| r.precision).sum::<f64>() / n,
        ar: per_threshold.iter().map(|r| r.recall).sum::<f64>() / n,
        per_threshold,
    })
}

/// First pixel in raster order showing each vertex, if any.
fn first_pixels(gt: &RgbImage, surface: &Surface) -> Vec<Option<(u32, u32)>> {
    let mut out = vec![None; surface.mesh.vertex_count()];
    for (x, y, p) in gt.enumerate_pixels() {
        if let Some(v) = surface.decode(p.0) {
            out[v].get_or_insert((x, y));
        }
    }
    out
}

/// Percentage of co-visible vertex pairs `(t, t + k)` whose predictions at
/// the vertex's GT locations lie within geodesic distance `tau` of each
/// other. A vertex is visible in a frame when its color appears in the GT;
/// its location is the first such pixel in raster order.
pub fn temporal_consistency(preds: &[RgbImage], gts: &[RgbImage], surface: &Surface, k: usize, tau: f64) -> Result<f64> {
    if preds.len() != gts.len() {
        return Err(Error::Shape(format!("{} predictions for {} frames", preds.len(), gts.len())));
    }
    if k == 0 || gts.len() <= k {
        return Err(Error::Config(format!("interval {k} needs more than {k} frames, got {}", gts.len())));
    }
    let firsts: Vec<_> = gts.iter().map(|g| first_pixels(g, surface)).collect();
    let (matches, pairs) = (0..gts.len() - k)
        .into_par_iter()
        .map(|t| {
            let (a, b) = (&firsts[t], &firsts[t + k]);
            let mut m = 0usize;
            let mut n = 0usize;
            for (pa, pb) in a.iter().zip(b) {
                let (Some(&(xa, ya)), Some(&(xb, yb))) = (pa.as_ref(), pb.as_ref()) else {
                    continue;
                };
                n += 1;
                let va = surface.decode(preds[t].get_pixel(xa, ya).0);
                let vb = surface.decode(preds[t + k].get_pixel(xb, yb).0);
                if let (Some(va), Some(vb)) = (va, vb) {
                    if surface.geodesics.get(va, vb) as f64 <= tau {
                        m += 1;
                    }
                }
            }
            (m, n)
        })
        .reduce(|| (0, 0), |x, y| (x.0 + y.0, x.1 + y.1));
    if pairs == 0 {
        return Err(Error::EmptyMask("temporal_consistency (no co-visible vertices)"));
    }
    Ok(100.0 * matches as f64 / pairs as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    /// Window (px) to percentage.
    pub pixel_accuracy: BTreeMap<u32, f64>,
    /// One score per GT instance with a prediction.
    pub gps: Vec<f64>,
    pub ap: f64,
    pub ar: f64,
    pub per_threshold: Vec<ThresholdRow>,
    /// Frame interval to percentage; empty without sequences.
    pub temporal: BTreeMap<usize, f64>,
    pub samples: usize,
}

/// Evaluation settings; geodesic quantities are in `sigma_geo` units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub windows: Vec<u32>,
    pub kappa: f64,
    pub thresholds: Vec<f64>,
    pub intervals: Vec<usize>,
    pub tau: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            windows: DEFAULT_WINDOWS.to_vec(),
            kappa: DEFAULT_KAPPA,
            thresholds: default_thresholds(),
            intervals: DEFAULT_INTERVALS.to_vec(),
            tau: DEFAULT_TAU,
        }
    }
}

/// GPS points of one instance: its annotations, or every pixel of the
/// instance when the sample carries none.
fn instance_points(sample: &Sample, id: u8, surface: &Surface) -> Vec<((u32, u32), usize)> {
    let w = sample.width();
    let on = |x: u32, y: u32| sample.instances[(y * w + x) as usize] == id;
    let annotated: Vec<_> = sample
        .annotations
        .iter()
        .filter(|a| on(a.x, a.y))
        .map(|a| ((a.x, a.y), a.vertex))
        .collect();
    if !annotated.is_empty() {
        return annotated;
    }
    sample
        .mask
        .pixels()
        .filter(|&(x, y)| on(x, y))
        .filter_map(|(x, y)| surface.decode(sample.corr.get_pixel(x, y).0).map(|v| ((x, y), v)))
        .collect()
}

/// Per-instance GPS of one prediction. An instance counts as predicted when
/// any of its pixels carries a foreground color; unpredicted points inside a
/// predicted instance take the largest geodesic distance.
pub fn instance_scores(pred: &RgbImage, sample: &Sample, surface: &Surface, kappa_abs: f64) -> Result<Vec<InstanceScore>> {
    let ids = sample.meta.instance_count.max(1) as u8;
    let far_vertex = |v: usize| {
        let row = surface.geodesics.row(v);
        row.iter()
            .enumerate()
            .fold((v, 0f32), |best, (u, &d)| if d > best.1 { (u, d) } else { best })
            .0
    };
    (1..=ids)
        .map(|id| {
            let points = instance_points(sample, id, surface);
            if points.is_empty() {
                return Ok(InstanceScore { gps: None });
            }
            let w = sample.width();
            let predicted = sample.mask.pixels().any(|(x, y)| {
                sample.instances[(y * w + x) as usize] == id && surface.decode(pred.get_pixel(x, y).0).is_some()
            });
            if !predicted {
                return Ok(InstanceScore { gps: None });
            }
            let (p, g): (Vec<usize>, Vec<usize>) = points
                .iter()
                .map(|&((x, y), v)| (surface.decode(pred.get_pixel(x, y).0).unwrap_or_else(|| far_vertex(v)), v))
                .unzip();
            Ok(InstanceScore {
                gps: Some(gps(&p, &g, &surface.geodesics, kappa_abs)?),
            })
        })
        .collect()
}

/// Full report over a set of samples and predictions (head 0). Pixel
/// accuracy pools pixels over all samples. Temporal consistency runs per
/// sequence over frames in order, pooled over sequences long enough for the
/// interval; it is skipped for intervals no sequence supports.
pub fn evaluate(samples: &[Sample], preds: &[RgbImage], surface: &Surface, cfg: &EvalConfig) -> Result<MetricReport> {
    if samples.len() != preds.len() {
        return Err(Error::Shape(format!("{} predictions for {} samples", preds.len(), samples.len())));
    }
    if samples.is_empty() {
        return Err(Error::Dataset("nothing to evaluate".into()));
    }
    let sg = surface.sigma_geo() as f64;
    let per_sample: Vec<(Vec<usize>, usize, Vec<InstanceScore>)> = samples
        .par_iter()
        .zip(preds)
        .map(|(s, p)| {
            let counts = correct_counts(p, &s.corr, &s.mask, surface, &cfg.windows)?;
            let inst = instance_scores(p, s, surface, cfg.kappa * sg)?;
            Ok((counts, s.mask.count(), inst))
        })
        .collect::<Result<_>>()?;
    let total: usize = per_sample.iter().map(|p| p.1).sum();
    let mut pixel_accuracy = BTreeMap::new();
    for (i, &w) in cfg.windows.iter().enumerate() {
        let c: usize = per_sample.iter().map(|p| p.0[i]).sum();
        pixel_accuracy.insert(w, 100.0 * c as f64 / total as f64);
    }
    let instances: Vec<InstanceScore> = per_sample.iter().flat_map(|p| p.2.iter().copied()).collect();
    let apar = ap_ar_over_gps(&instances, &cfg.thresholds)?;

    let mut sequences: BTreeMap<u32, Vec<(u32, usize)>> = BTreeMap::new();
    for (i, s) in samples.iter().enumerate() {
        sequences.entry(s.meta.sequence).or_default().push((s.meta.frame, i));
    }
    let mut temporal = BTreeMap::new();
    for &k in &cfg.intervals {
        let mut matches = 0.0;
        let mut pairs = 0.0;
        for frames in sequences.values_mut() {
            frames.sort();
            if frames.len() <= k {
                continue;
            }
            let p: Vec<RgbImage> = frames.iter().map(|&(_, i)| preds[i].clone()).collect();
            let g: Vec<RgbImage> = frames.iter().map(|&(_, i)| samples[i].corr.clone()).collect();
            let n = co_visible_pairs(&g, surface, k) as f64;
            if n == 0.0 {
                continue;
            }
            matches += temporal_consistency(&p, &g, surface, k, cfg.tau * sg)? / 100.0 * n;
            pairs += n;
        }
        if pairs > 0.0 {
            temporal.insert(k, 100.0 * matches / pairs);
        }
    }
    Ok(MetricReport {
        pixel_accuracy,
        gps: instances.iter().filter_map(|i| i.gps).collect(),
        ap: apar.ap,
        ar: apar.ar,
        per_threshold: apar.per_threshold,
        temporal,
        samples: samples.len(),
    })
}

fn co_visible_pairs(gts: &[RgbImage], surface: &Surface, k: usize) -> usize {
    let firsts: Vec<_> = gts.iter().map(|g| first_pixels(g, surface)).collect();
    (0..gts.len() - k)
        .map(|t| {
            firsts[t]
                .iter()
                .zip(&firsts[t + k])
                .filter(|(a, b)| a.is_some() && b.is_some())
                .count()
        })
        .sum()
}
