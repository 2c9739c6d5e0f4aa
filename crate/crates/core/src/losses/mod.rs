//! Training objectives.
//!
//! Two flavors share one definition per term: plain `f64` evaluators on
//! decoded images (`*_eval`), and tensor versions that carry gradients
//! into the network. Geodesic terms cannot be differentiated through the
//! nearest-vertex decode, so the tensor versions route gradients through
//! the softmax expected color and hold the decode fixed.

use candle_core::{DType, Device, Tensor};
use image::RgbImage;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Mask;
use crate::mesh::coloring::Rgb;
use crate::mesh::Surface;
use crate::net::LABELS;

mod label_stats;
pub use label_stats::label_stats;

/// Keeps the color distance differentiable at zero.
const NORM_EPS: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    pub cls: f64,
    pub sil: f64,
    pub geo: f64,
    pub con: f64,
    /// Classification weight of head and hand pixels.
    pub fine_part_weight: f64,
    pub part_weight: f64,
    /// Geodesic normalizer; the template's largest distance when unset.
    pub sigma_geo: Option<f64>,
    /// Color normalizer of the consistency term.
    pub sigma_col: f64,
    pub con_samples: usize,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            cls: 1.0,
            sil: 0.5,
            geo: 0.5,
            con: 0.1,
            fine_part_weight: 2.0,
            part_weight: 1.0,
            sigma_geo: None,
            sigma_col: 255.0 * 3.0,
            con_samples: 100,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("cls", self.cls), ("sil", self.sil), ("geo", self.geo), ("con", self.con)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("loss weight {name} = {v} must be finite and >= 0")));
            }
        }
        if !(self.fine_part_weight > 0.0 && self.part_weight > 0.0) {
            return Err(Error::Config("part weights must be positive".into()));
        }
        if self.sigma_geo.is_some_and(|s| !(s > 0.0)) || !(self.sigma_col > 0.0) {
            return Err(Error::Config("sigma_geo and sigma_col must be positive".into()));
        }
        if self.con_samples == 0 {
            return Err(Error::Config("con_samples must be at least 1".into()));
        }
        Ok(())
    }

    pub fn sigma_geo(&self, surface: &Surface) -> f64 {
        self.sigma_geo.unwrap_or(surface.sigma_geo() as f64)
    }

    /// Same weights with every λ multiplied by `k`.
    pub fn scaled(&self, k: f64) -> Self {
        Self {
            cls: self.cls * k,
            sil: self.sil * k,
            geo: self.geo * k,
            con: self.con * k,
            ..self.clone()
        }
    }

    /// Per-pixel classification weights from the body part of each GT vertex.
    pub fn part_weight_map(&self, gt: &RgbImage, mask: &Mask, surface: &Surface) -> Vec<f32> {
        let parts = surface.mesh.parts();
        let mut out = vec![0f32; (mask.width() * mask.height()) as usize];
        for (x, y) in mask.pixels() {
            let v = surface.coloring.color_to_vertex(gt.get_pixel(x, y).0);
            let w = if parts[v].is_fine_detail() {
                self.fine_part_weight
            } else {
                self.part_weight
            };
            out[(y * mask.width() + x) as usize] = w as f32;
        }
        out
    }
}

/// Per-term values of one evaluation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub cls: f64,
    pub sil: f64,
    pub geo: f64,
    pub con: f64,
    pub total: f64,
}

/// Weighted sum of the four terms. A non-finite term is an error naming it.
pub fn total_loss(cls: f64, sil: f64, geo: f64, con: f64, w: &LossWeights) -> Result<LossBreakdown> {
    for (name, v) in [("loss_cls", cls), ("loss_sil", sil), ("loss_geo", geo), ("loss_con", con)] {
        if !v.is_finite() {
            return Err(Error::NonFinite(name));
        }
    }
    Ok(LossBreakdown {
        cls,
        sil,
        geo,
        con,
        total: w.cls * cls + w.sil * sil + w.geo * geo + w.con * con,
    })
}

fn scalar(t: &Tensor) -> Result<f64> {
    Ok(t.to_dtype(DType::F64)?.to_scalar::<f64>()?)
}

/// Foreground-mean, part-weighted cross-entropy between `(B, H, W, 3, 256)`
/// scores and the `(B, H, W, 3)` GT channel labels, averaged over the 3
/// channels and the batch. `weights` is `(B, H, W)` and zero off the
/// supervised pixels.
pub fn loss_cls(logits: &Tensor, labels: &Tensor, weights: &Tensor) -> Result<Tensor> {
    let (b, h, w, c, l) = logits.dims5()?;
    if c != 3 || l != LABELS || labels.dims() != [b, h, w, 3] || weights.dims() != [b, h, w] {
        return Err(Error::Shape(format!(
            "loss_cls: logits {:?}, labels {:?}, weights {:?}",
            logits.dims(),
            labels.dims(),
            weights.dims()
        )));
    }
    let logp = label_stats(logits, labels)?.narrow(4, 0, 1)?.squeeze(4)?;
    cls_from_log_probs(&logp, weights, false)
}

/// `logp` is `(B, H, W, 3)`: log-probability of the GT label per channel.
/// With `allow_empty`, items without supervised pixels contribute zero
/// instead of failing.
fn cls_from_log_probs(logp: &Tensor, weights: &Tensor, allow_empty: bool) -> Result<Tensor> {
    let counts: Vec<f64> = weights
        .to_dtype(DType::F64)?
        .ne(0.0)?
        .to_dtype(DType::F64)?
        .sum((1, 2))?
        .to_vec1()?;
    if !allow_empty && counts.iter().any(|&n| n == 0.0) {
        return Err(Error::EmptyMask("loss_cls"));
    }
    let per_item = logp.broadcast_mul(&weights.unsqueeze(3)?)?.sum((1, 2, 3))?.neg()?;
    let denom = Tensor::new(counts.iter().map(|n| 3.0 * n.max(1.0)).collect::<Vec<_>>(), logp.device())?.to_dtype(logp.dtype())?;
    Ok((per_item / denom)?.mean(0)?)
}

/// `1 - softIoU` of probabilities `p` against a 0/1 mask, both `(B, H, W)`,
/// averaged over the batch.
pub fn loss_sil_probs(p: &Tensor, mask: &Tensor) -> Result<Tensor> {
    let inter = (p * mask)?.sum((1, 2))?;
    let union = ((p + mask)?.sum((1, 2))? - &inter)?;
    let u: Vec<f64> = union.to_dtype(DType::F64)?.to_vec1()?;
    if u.iter().any(|&x| x == 0.0) {
        return Err(Error::EmptyMask("loss_sil (prediction and mask both empty)"));
    }
    Ok((1.0 - (inter / union)?)?.mean(0)?)
}

/// [`loss_sil_probs`] on sigmoid probabilities of foreground logits.
pub fn loss_sil(fg_logit: &Tensor, mask: &Tensor) -> Result<Tensor> {
    loss_sil_probs(&sigmoid(fg_logit)?, mask)
}

/// Logistic function as `(1 + tanh(x / 2)) / 2`, finite with a finite
/// gradient for any input.
pub fn sigmoid(x: &Tensor) -> Result<Tensor> {
    Ok((((x * 0.5)?.tanh()? + 1.0)? * 0.5)?)
}

/// `Σ_l l · softmax(scores)_l` per pixel and channel: `(B, H, W, 3, 256)`
/// to `(B, H, W, 3)` in `[0, 255]`.
pub fn expected_color(logits: &Tensor) -> Result<Tensor> {
    let dims = logits.dims();
    let labels = Tensor::zeros(&dims[..dims.len() - 1], DType::U32, logits.device())?;
    Ok(label_stats(logits, &labels)?.narrow(dims.len() - 1, 1, 1)?.squeeze(dims.len() - 1)?)
}

/// A prediction as seen by the geodesic terms.
#[derive(Debug, Clone, Copy)]
pub enum Prediction<'a> {
    /// Hard 8-bit colors.
    Image(&'a RgbImage),
    /// Real-valued colors, row-major per pixel.
    Expected { width: u32, colors: &'a [[f64; 3]] },
}

impl Prediction<'_> {
    fn color(&self, x: u32, y: u32) -> [f64; 3] {
        match self {
            Prediction::Image(img) => img.get_pixel(x, y).0.map(f64::from),
            Prediction::Expected { width, colors } => colors[(y * width + x) as usize],
        }
    }

    fn vertex(&self, x: u32, y: u32, surface: &Surface) -> usize {
        match self {
            Prediction::Image(img) => surface.coloring.color_to_vertex(img.get_pixel(x, y).0),
            Prediction::Expected { .. } => surface.coloring.real_color_to_vertex(self.color(x, y)),
        }
    }
}

/// Geodesic error between decoded prediction and GT, summed over the
/// mask and divided by pixel count and `sigma_geo`.
pub fn loss_geo_eval(pred: Prediction, gt: &RgbImage, mask: &Mask, surface: &Surface, sigma_geo: f64) -> Result<f64> {
    let n = mask.count();
    if n == 0 {
        return Err(Error::EmptyMask("loss_geo"));
    }
    let sum: f64 = mask
        .pixels()
        .map(|(x, y)| {
            let v = pred.vertex(x, y, surface);
            let g = surface.coloring.color_to_vertex(gt.get_pixel(x, y).0);
            surface.geodesics.get(v, g) as f64
        })
        .sum();
    Ok(sum / (n as f64 * sigma_geo))
}

/// Reference pixel indices (into the mask's raster-order foreground list)
/// for the consistency term; shared by both flavors.
pub fn reference_pixels(foreground: usize, n_samples: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n_samples).map(|_| rng.random_range(0..foreground)).collect()
}

/// Consistency regularizer: for each reference pixel, the mean over the
/// mask of `ln(1 + exp(D_g / σ_geo - |c_r - c_p|_1 / σ_col))`, averaged over
/// references.
pub fn loss_con_eval(
    pred: Prediction,
    mask: &Mask,
    surface: &Surface,
    sigma_geo: f64,
    sigma_col: f64,
    n_samples: usize,
    seed: u64,
) -> Result<f64> {
    let fg: Vec<(u32, u32)> = mask.pixels().collect();
    if fg.is_empty() {
        return Err(Error::EmptyMask("loss_con"));
    }
    if n_samples == 0 {
        return Err(Error::Config("loss_con needs at least one sample".into()));
    }
    let verts: Vec<usize> = fg.iter().map(|&(x, y)| pred.vertex(x, y, surface)).collect();
    let cols: Vec<[f64; 3]> = fg.iter().map(|&(x, y)| pred.color(x, y)).collect();
    let refs = reference_pixels(fg.len(), n_samples, seed);
    let mut total = 0.0;
    for &r in &refs {
        let mut acc = 0.0;
        for p in 0..fg.len() {
            let dg = surface.geodesics.get(verts[r], verts[p]) as f64 / sigma_geo;
            let dc: f64 = (0..3).map(|k| (cols[r][k] - cols[p][k]).abs()).sum::<f64>() / sigma_col;
            acc += (1.0 + (dg - dc).exp()).ln();
        }
        total += acc / fg.len() as f64;
    }
    Ok(total / refs.len() as f64)
}

/// Supervision for one output head of one image.
#[derive(Debug, Clone)]
pub struct Target {
    /// GT colors on `supervised`, background elsewhere.
    pub corr: RgbImage,
    /// Pixels contributing to the classification and geodesic terms.
    pub supervised: Mask,
    /// Foreground for the silhouette and consistency terms.
    pub silhouette: Mask,
}

fn flat_indices(mask: &Mask) -> Vec<u32> {
    let w = mask.width();
    mask.pixels().map(|(x, y)| y * w + x).collect()
}

/// Training-time geodesic term for one image. `expected` is `(H, W, 3)`.
///
/// Each supervised pixel contributes `D_g(v̂, v) |E - c_v| / |c_v̂ - c_v|`,
/// where `v̂` decodes the expected color `E` and is held fixed. Since `E`
/// decodes to `v̂`, the ratio stays near one and the value tracks the
/// evaluated term while its gradient pulls `E` towards the GT color.
pub fn loss_geo_train(expected: &Tensor, target: &Target, surface: &Surface, sigma_geo: f64) -> Result<Tensor> {
    let (h, w, _) = expected.dims3()?;
    let idx = flat_indices(&target.supervised);
    if idx.is_empty() {
        return Err(Error::EmptyMask("loss_geo"));
    }
    let dev = expected.device();
    let e = expected
        .reshape((h * w, 3))?
        .index_select(&Tensor::new(idx.as_slice(), dev)?, 0)?;
    let e_host: Vec<Vec<f64>> = e.to_dtype(DType::F64)?.to_vec2()?;
    let n = idx.len();
    let mut gt = vec![0f64; 3 * n];
    let mut scale = vec![0f64; n];
    for (k, &i) in idx.iter().enumerate() {
        let (x, y) = (i % w as u32, i / w as u32);
        let c_gt: Rgb = target.corr.get_pixel(x, y).0;
        let v_gt = surface.coloring.color_to_vertex(c_gt);
        let v_hat = surface.coloring.real_color_to_vertex([e_host[k][0], e_host[k][1], e_host[k][2]]);
        for ch in 0..3 {
            gt[k * 3 + ch] = c_gt[ch] as f64;
        }
        if v_hat != v_gt {
            let c_hat = surface.color(v_hat);
            let denom = (0..3)
                .map(|ch| (c_hat[ch] as f64 - c_gt[ch] as f64).powi(2))
                .sum::<f64>()
                .sqrt();
            scale[k] = surface.geodesics.get(v_hat, v_gt) as f64 / denom;
        }
    }
    let gt = Tensor::from_vec(gt, (n, 3), dev)?.to_dtype(e.dtype())?;
    let scale = Tensor::from_vec(scale, n, dev)?.to_dtype(e.dtype())?;
    let dist = ((e - gt)?.sqr()?.sum(1)? + NORM_EPS)?.sqrt()?;
    Ok(((dist * scale)?.sum_all()? / (n as f64 * sigma_geo))?)
}

/// Training-time consistency term for one image. Geodesic distances come
/// from the decoded expected colors and are held fixed; the L1 color
/// distance carries the gradient.
pub fn loss_con_train(
    expected: &Tensor,
    silhouette: &Mask,
    surface: &Surface,
    sigma_geo: f64,
    sigma_col: f64,
    n_samples: usize,
    seed: u64,
) -> Result<Tensor> {
    let (h, w, _) = expected.dims3()?;
    let idx = flat_indices(silhouette);
    if idx.is_empty() {
        return Err(Error::EmptyMask("loss_con"));
    }
    let dev = expected.device();
    let e = expected
        .reshape((h * w, 3))?
        .index_select(&Tensor::new(idx.as_slice(), dev)?, 0)?;
    let e_host: Vec<Vec<f64>> = e.to_dtype(DType::F64)?.to_vec2()?;
    let n = idx.len();
    let verts: Vec<usize> = e_host
        .iter()
        .map(|c| surface.coloring.real_color_to_vertex([c[0], c[1], c[2]]))
        .collect();
    let refs = reference_pixels(n, n_samples, seed);
    let mut dg = Vec::with_capacity(refs.len() * n);
    for &r in &refs {
        let row = surface.geodesics.row(verts[r]);
        dg.extend(verts.iter().map(|&v| row[v] as f64 / sigma_geo));
    }
    let dg = Tensor::from_vec(dg, (refs.len(), n), dev)?.to_dtype(e.dtype())?;
    let ref_idx = Tensor::new(refs.iter().map(|&r| r as u32).collect::<Vec<_>>().as_slice(), dev)?;
    let e_ref = e.index_select(&ref_idx, 0)?.unsqueeze(1)?; // (R, 1, 3)
    let l1 = e_ref.broadcast_sub(&e.unsqueeze(0)?)?.abs()?.sum(2)?; // (R, N)
    let z = (dg - (l1 / sigma_col)?)?;
    let softplus = (z.exp()? + 1.0)?.log()?;
    Ok(softplus.mean_all()?)
}

/// GT labels `(H, W, 3)` as u32 channel values.
pub fn label_tensor(corr: &RgbImage, device: &Device) -> Result<Tensor> {
    let (w, h) = corr.dimensions();
    let out: Vec<u32> = corr.as_raw().iter().map(|&v| v as u32).collect();
    Ok(Tensor::from_vec(out, (h as usize, w as usize, 3), device)?)
}

pub fn mask_tensor(mask: &Mask, dtype: DType, device: &Device) -> Result<Tensor> {
    let v: Vec<f32> = mask.as_slice().iter().map(|&b| b as u8 as f32).collect();
    Ok(Tensor::from_vec(v, (mask.height() as usize, mask.width() as usize), device)?.to_dtype(dtype)?)
}

/// All four terms for one head over a batch. Returns the weighted total as
/// a tensor plus the per-term values. Terms with zero weight are skipped.
/// Without a surface (garment heads) only cls and sil apply, and an item
/// whose garment is not visible adds nothing to cls.
pub fn head_loss(
    color: &Tensor,
    fg: &Tensor,
    targets: &[&Target],
    surface: Option<&Surface>,
    w: &LossWeights,
    seed: u64,
) -> Result<(Tensor, LossBreakdown)> {
    let dev = color.device();
    let dtype = color.dtype();
    let b = targets.len();
    let mut terms: Vec<Tensor> = Vec::new();
    let mut parts = [0.0f64; 4];
    let labels = Tensor::stack(
        &targets.iter().map(|t| label_tensor(&t.corr, dev)).collect::<Result<Vec<_>>>()?,
        0,
    )?;
    let stats = label_stats(color, &labels)?;
    if w.cls > 0.0 {
        let weights = Tensor::stack(
            &targets
                .iter()
                .map(|t| {
                    let map = match surface {
                        Some(s) => w.part_weight_map(&t.corr, &t.supervised, s),
                        None => t.supervised.as_slice().iter().map(|&m| m as u8 as f32 * w.part_weight as f32).collect(),
                    };
                    let (mw, mh) = t.supervised.dims();
                    Ok(Tensor::from_vec(map, (mh as usize, mw as usize), dev)?.to_dtype(dtype)?)
                })
                .collect::<Result<Vec<_>>>()?,
            0,
        )?;
        let l = cls_from_log_probs(&stats.narrow(4, 0, 1)?.squeeze(4)?, &weights, surface.is_none())?;
        parts[0] = scalar(&l)?;
        terms.push((l * w.cls)?);
    }
    if w.sil > 0.0 {
        let m = Tensor::stack(
            &targets
                .iter()
                .map(|t| mask_tensor(&t.silhouette, dtype, dev))
                .collect::<Result<Vec<_>>>()?,
            0,
        )?;
        let l = loss_sil(fg, &m)?;
        parts[1] = scalar(&l)?;
        terms.push((l * w.sil)?);
    }
    if let (Some(s), true) = (surface, w.geo > 0.0 || w.con > 0.0) {
        let expected = stats.narrow(4, 1, 1)?.squeeze(4)?;
        let sg = w.sigma_geo(s);
        let mut geo = Vec::new();
        let mut con = Vec::new();
        for (i, t) in targets.iter().enumerate() {
            let e = expected.get(i)?;
            if w.geo > 0.0 {
                geo.push(loss_geo_train(&e, t, s, sg)?);
            }
            if w.con > 0.0 {
                con.push(loss_con_train(&e, &t.silhouette, s, sg, w.sigma_col, w.con_samples, seed.wrapping_add(i as u64))?);
            }
        }
        if !geo.is_empty() {
            let l = (Tensor::stack(&geo, 0)?.sum(0)? / b as f64)?;
            parts[2] = scalar(&l)?;
            terms.push((l * w.geo)?);
        }
        if !con.is_empty() {
            let l = (Tensor::stack(&con, 0)?.sum(0)? / b as f64)?;
            parts[3] = scalar(&l)?;
            terms.push((l * w.con)?);
        }
    }
    let breakdown = total_loss(parts[0], parts[1], parts[2], parts[3], w)?;
    let total = match terms.split_first() {
        Some((first, rest)) => rest.iter().try_fold(first.clone(), |acc, t| acc + t)?,
        None => Tensor::zeros((), dtype, dev)?,
    };
    Ok((total, breakdown))
}
