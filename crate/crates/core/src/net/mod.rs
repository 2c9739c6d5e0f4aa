//! The correspondence network: patch tokenization, an appearance and a
//! correspondence transformer with separate weights, per-stage fusion, a
//! residual convolutional decoder and 256-way per-channel color heads.

pub mod checkpoint;
pub mod layers;
pub mod params;

use candle_core::{DType, Device, Tensor};
use image::{Rgb, RgbImage};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Mask;
use crate::mesh::coloring::BACKGROUND;
use layers::{block, block_specs, conv2d, conv_specs, linear, rcu, rcu_specs, spec};
use params::{Init, ParamSpec, ParamStore};

pub const LABELS: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub image_size: usize,
    pub patch_size: usize,
    pub token_dim: usize,
    pub encoder_depth: usize,
    pub attention_heads: usize,
    pub mlp_ratio: usize,
    /// Channel width per decoder stage, finest first. Stage `i` runs at
    /// `grid * 2^(stages - 1 - i)` pixels per side.
    pub decoder_widths: Vec<usize>,
    /// 1 for a single correspondence map, 3 for body/upper/lower layers.
    pub heads: usize,
    pub use_correspondence_branch: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            image_size: 128,
            patch_size: 16,
            token_dim: 192,
            encoder_depth: 6,
            attention_heads: 3,
            mlp_ratio: 4,
            decoder_widths: vec![48, 64, 96, 128],
            heads: 3,
            use_correspondence_branch: true,
        }
    }
}

impl ModelConfig {
    /// Small configuration for CPU experiments: patch 4, width 32, two
    /// blocks, three decoder stages, one output head.
    pub fn desk(image_size: usize) -> Self {
        Self {
            image_size,
            patch_size: 4,
            token_dim: 32,
            encoder_depth: 2,
            attention_heads: 2,
            mlp_ratio: 2,
            decoder_widths: vec![32, 32, 32],
            heads: 1,
            use_correspondence_branch: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.patch_size == 0 || self.image_size == 0 || self.image_size % self.patch_size != 0 {
            return bad(format!(
                "image_size {} is not divisible by patch_size {}",
                self.image_size, self.patch_size
            ));
        }
        if self.heads != 1 && self.heads != 3 {
            return bad(format!("heads must be 1 or 3, got {}", self.heads));
        }
        if self.attention_heads == 0 || self.token_dim % self.attention_heads != 0 {
            return bad(format!(
                "token_dim {} is not divisible by attention_heads {}",
                self.token_dim, self.attention_heads
            ));
        }
        if self.encoder_depth == 0 || self.mlp_ratio == 0 {
            return bad("encoder_depth and mlp_ratio must be positive".into());
        }
        let stages = self.decoder_widths.len();
        if stages == 0 || self.decoder_widths.contains(&0) {
            return bad("decoder_widths must be a nonempty list of positive widths".into());
        }
        let finest = 1usize << (stages - 1);
        if self.patch_size % finest != 0 {
            return bad(format!(
                "patch_size {} must be divisible by 2^(stages-1) = {finest}",
                self.patch_size
            ));
        }
        Ok(())
    }

    pub fn grid(&self) -> usize {
        self.image_size / self.patch_size
    }

    pub fn tokens(&self) -> usize {
        self.grid() * self.grid() + 1
    }

    pub fn stages(&self) -> usize {
        self.decoder_widths.len()
    }

    /// Side length of decoder stage `i` (0 = finest).
    pub fn stage_size(&self, i: usize) -> usize {
        self.grid() << (self.stages() - 1 - i)
    }

    /// Transformer block whose output feeds stage `i`; shallow blocks feed
    /// fine stages.
    pub fn hook(&self, i: usize) -> usize {
        ((i + 1) * self.encoder_depth).div_ceil(self.stages()) - 1
    }

    fn encoders(&self) -> &'static [&'static str] {
        if self.use_correspondence_branch {
            &["app", "corr"]
        } else {
            &["app"]
        }
    }

    /// Every parameter of the model in initialization order.
    pub fn param_specs(&self) -> Vec<ParamSpec> {
        let d = self.token_dim;
        let p = self.patch_size;
        let mut out = Vec::new();
        for enc in self.encoders() {
            layers::linear_specs(&mut out, &format!("{enc}.patch"), 3 * p * p, d);
            out.push(spec(format!("{enc}.readout"), &[1, 1, d], Init::Normal(0.02)));
            out.push(spec(format!("{enc}.pos"), &[1, self.tokens(), d], Init::Normal(0.02)));
            for b in 0..self.encoder_depth {
                block_specs(&mut out, &format!("{enc}.blocks.{b}"), d, self.mlp_ratio);
            }
            for (i, &c) in self.decoder_widths.iter().enumerate() {
                conv_specs(&mut out, &format!("{enc}.reassemble.{i}.proj"), d, c, 1, 1.0);
                conv_specs(&mut out, &format!("{enc}.reassemble.{i}.resample"), c, c, 3, 1.0);
            }
        }
        let branches = self.encoders().len();
        for (i, &c) in self.decoder_widths.iter().enumerate() {
            conv_specs(&mut out, &format!("fuse.{i}"), branches * c, c, 1, 1.0);
            rcu_specs(&mut out, &format!("refine.{i}.rcu1"), c);
            rcu_specs(&mut out, &format!("refine.{i}.rcu2"), c);
            if i + 1 < self.stages() {
                conv_specs(&mut out, &format!("refine.{i}.up"), self.decoder_widths[i + 1], c, 1, 1.0);
            }
        }
        let c0 = self.decoder_widths[0];
        conv_specs(&mut out, "out.conv", c0, c0, 3, 1.0);
        conv_specs(&mut out, "head.color", c0, self.heads * 3 * LABELS, 1, 0.01);
        conv_specs(&mut out, "head.fg", c0, self.heads, 1, 0.1);
        out
    }
}

/// Token sequence `(B, N + 1, D)`, readout at position 0.
#[derive(Debug, Clone)]
pub struct TokenSequence(pub Tensor);

/// Network output. Per head: color scores `(B, H, W, 3, 256)` and a
/// foreground logit `(B, H, W)`.
#[derive(Debug, Clone)]
pub struct CorrespondenceLogits {
    pub color: Vec<Tensor>,
    pub fg: Vec<Tensor>,
}

impl CorrespondenceLogits {
    pub fn heads(&self) -> usize {
        self.color.len()
    }

    /// Decoded correspondence image of batch item `b`, head `h`.
    pub fn image(&self, head: usize, b: usize, mask: &Mask) -> Result<RgbImage> {
        logits_to_image(&self.color[head].get(b)?, mask)
    }
}

/// Network inputs in tensor form.
#[derive(Debug, Clone)]
pub struct Inputs {
    /// `(B, 3, H, W)`, centered to `[-0.5, 0.5]`, zero off the mask.
    pub rgb: Tensor,
    pub init: Tensor,
    /// `(B, 1, H, W)` of 0/1.
    pub mask: Tensor,
}

fn image_tensor(img: &RgbImage, mask: &Mask) -> Vec<f32> {
    let (w, h) = img.dimensions();
    let mut out = vec![0f32; (3 * w * h) as usize];
    for (x, y, p) in img.enumerate_pixels() {
        if mask.get(x, y) {
            for c in 0..3 {
                out[(c as u32 * w * h + y * w + x) as usize] = p.0[c] as f32 / 255.0 - 0.5;
            }
        }
    }
    out
}

impl Inputs {
    pub fn new(items: &[(&RgbImage, &RgbImage, &Mask)], dtype: DType, device: &Device) -> Result<Self> {
        let Some(first) = items.first() else {
            return Err(Error::Shape("empty batch".into()));
        };
        let (w, h) = first.0.dimensions();
        let mut rgb = Vec::new();
        let mut init = Vec::new();
        let mut mask = Vec::new();
        for (r, i, m) in items {
            if r.dimensions() != (w, h) || i.dimensions() != (w, h) || m.dims() != (w, h) {
                return Err(Error::Shape(format!(
                    "batch item of size {:?}/{:?}/{:?}, expected {w}x{h}",
                    r.dimensions(),
                    i.dimensions(),
                    m.dims()
                )));
            }
            rgb.extend(image_tensor(r, m));
            init.extend(image_tensor(i, m));
            mask.extend(m.as_slice().iter().map(|&b| b as u8 as f32));
        }
        let b = items.len();
        let (h, w) = (h as usize, w as usize);
        Ok(Self {
            rgb: Tensor::from_vec(rgb, (b, 3, h, w), device)?.to_dtype(dtype)?,
            init: Tensor::from_vec(init, (b, 3, h, w), device)?.to_dtype(dtype)?,
            mask: Tensor::from_vec(mask, (b, 1, h, w), device)?.to_dtype(dtype)?,
        })
    }
}

/// Model configuration plus parameters.
#[derive(Debug, Clone)]
pub struct BodyMapNet {
    pub cfg: ModelConfig,
    pub params: ParamStore,
}

impl BodyMapNet {
    pub fn new(cfg: ModelConfig, seed: u64, dtype: DType, device: &Device) -> Result<Self> {
        cfg.validate()?;
        let params = ParamStore::init(&cfg.param_specs(), seed, dtype, device)?;
        Ok(Self { cfg, params })
    }

    pub fn dtype(&self) -> DType {
        self.params.dtype()
    }

    pub fn device(&self) -> &Device {
        self.params.device()
    }

    /// Splits `(B, 3, H, W)` into flattened patches and projects them; adds
    /// the readout token and positional encodings.
    pub fn tokenize(&self, enc: &str, image: &Tensor) -> Result<TokenSequence> {
        let (b, c, h, w) = image.dims4()?;
        let p = self.cfg.patch_size;
        if c != 3 || h != self.cfg.image_size || w != self.cfg.image_size {
            return Err(Error::Shape(format!(
                "image of shape ({c}, {h}, {w}), model expects (3, {0}, {0})",
                self.cfg.image_size
            )));
        }
        let g = h / p;
        let patches = image
            .reshape((b, 3, g, p, g, p))?
            .permute((0, 2, 4, 1, 3, 5))?
            .reshape((b, g * g, 3 * p * p))?;
        let emb = linear(&self.params, &format!("{enc}.patch"), &patches)?;
        let readout = self.params.get(&format!("{enc}.readout")).broadcast_as((b, 1, self.cfg.token_dim))?;
        let tokens = Tensor::cat(&[&readout, &emb], 1)?;
        Ok(TokenSequence(tokens.broadcast_add(self.params.get(&format!("{enc}.pos")))?))
    }

    /// Runs one transformer and reassembles its hooked outputs into
    /// `(B, C_i, S_i, S_i)` maps, finest stage first.
    pub fn encode(&self, enc: &str, tokens: &TokenSequence) -> Result<Vec<Tensor>> {
        let cfg = &self.cfg;
        let mut x = tokens.0.clone();
        let mut taps = Vec::with_capacity(cfg.encoder_depth);
        for b in 0..cfg.encoder_depth {
            x = block(&self.params, &format!("{enc}.blocks.{b}"), &x, cfg.attention_heads)?;
            taps.push(x.clone());
        }
        let (bsz, n1, d) = x.dims3()?;
        let g = cfg.grid();
        (0..cfg.stages())
            .map(|i| {
                let t = &taps[cfg.hook(i)];
                let readout = t.narrow(1, 0, 1)?;
                let patches = t.narrow(1, 1, n1 - 1)?.broadcast_add(&readout)?;
                let map = patches.transpose(1, 2)?.reshape((bsz, d, g, g))?;
                let map = conv2d(&self.params, &format!("{enc}.reassemble.{i}.proj"), &map, 0)?;
                let s = cfg.stage_size(i);
                let map = if s != g { map.upsample_nearest2d(s, s)? } else { map };
                conv2d(&self.params, &format!("{enc}.reassemble.{i}.resample"), &map, 1)
            })
            .collect()
    }

    pub fn encode_appearance(&self, rgb: &Tensor) -> Result<Vec<Tensor>> {
        self.encode("app", &self.tokenize("app", rgb)?)
    }

    pub fn encode_correspondence(&self, init: &Tensor) -> Result<Vec<Tensor>> {
        self.encode("corr", &self.tokenize("corr", init)?)
    }

    /// Concatenates the two feature pyramids per stage, refines coarse to
    /// fine and predicts full-resolution logits.
    pub fn fuse_and_decode(&self, app: &[Tensor], corr: Option<&[Tensor]>) -> Result<CorrespondenceLogits> {
        let cfg = &self.cfg;
        let p = &self.params;
        if app.len() != cfg.stages() || corr.is_some_and(|c| c.len() != cfg.stages()) {
            return Err(Error::Shape("feature pyramid depth differs from decoder stages".into()));
        }
        let mut x: Option<Tensor> = None;
        for i in (0..cfg.stages()).rev() {
            let f = match corr {
                Some(c) => {
                    if c[i].dims() != app[i].dims() {
                        return Err(Error::Shape(format!(
                            "stage {i}: appearance {:?} vs correspondence {:?}",
                            app[i].dims(),
                            c[i].dims()
                        )));
                    }
                    Tensor::cat(&[&app[i], &c[i]], 1)?
                }
                None => app[i].clone(),
            };
            let f = conv2d(p, &format!("fuse.{i}"), &f, 0)?;
            let mut h = rcu(p, &format!("refine.{i}.rcu1"), &f)?;
            if let Some(prev) = &x {
                let s = cfg.stage_size(i);
                let up = conv2d(p, &format!("refine.{i}.up"), &prev.upsample_nearest2d(s, s)?, 0)?;
                h = (h + up)?;
            }
            x = Some(rcu(p, &format!("refine.{i}.rcu2"), &h)?);
        }
        let x = x.expect("at least one stage");
        let full = cfg.image_size;
        let x = if cfg.stage_size(0) != full { x.upsample_nearest2d(full, full)? } else { x };
        let x = conv2d(p, "out.conv", &x, 1)?.relu()?;
        let b = x.dim(0)?;
        let x = x.permute((0, 2, 3, 1))?;
        let color = pixelwise(p, "head.color", &x)?;
        let fg = pixelwise(p, "head.fg", &x)?;
        if cfg.heads == 1 {
            return Ok(CorrespondenceLogits {
                color: vec![color.reshape((b, full, full, 3, LABELS))?],
                fg: vec![fg.squeeze(3)?],
            });
        }
        let color = color.reshape((b, full, full, cfg.heads, 3, LABELS))?;
        Ok(CorrespondenceLogits {
            color: (0..cfg.heads).map(|h| color.get_on_dim(3, h)).collect::<candle_core::Result<_>>()?,
            fg: (0..cfg.heads).map(|h| fg.get_on_dim(3, h)).collect::<candle_core::Result<_>>()?,
        })
    }

    pub fn forward(&self, inputs: &Inputs) -> Result<CorrespondenceLogits> {
        let rgb = inputs.rgb.broadcast_mul(&inputs.mask)?;
        let app = self.encode_appearance(&rgb)?;
        if self.cfg.use_correspondence_branch {
            let init = inputs.init.broadcast_mul(&inputs.mask)?;
            let corr = self.encode_correspondence(&init)?;
            self.fuse_and_decode(&app, Some(&corr))
        } else {
            self.fuse_and_decode(&app, None)
        }
    }

    /// Predicted correspondence images (head 0) for a batch.
    pub fn predict(&self, items: &[(&RgbImage, &RgbImage, &Mask)]) -> Result<Vec<RgbImage>> {
        let inputs = Inputs::new(items, self.dtype(), self.device())?;
        let logits = self.forward(&inputs)?;
        items
            .iter()
            .enumerate()
            .map(|(b, (_, _, m))| logits.image(0, b, m))
            .collect()
    }

    /// Copy for another input resolution with bilinearly resampled
    /// positional encodings. All other weights are resolution-free.
    pub fn with_image_size(&self, image_size: usize) -> Result<Self> {
        let cfg = ModelConfig {
            image_size,
            ..self.cfg.clone()
        };
        cfg.validate()?;
        let mut params = self.params.deep_clone()?;
        let (old_g, new_g) = (self.cfg.grid(), cfg.grid());
        for enc in cfg.encoders() {
            let name = format!("{enc}.pos");
            let pos = params.get(&name).to_dtype(DType::F64)?.squeeze(0)?;
            let table: Vec<Vec<f64>> = pos.to_vec2()?;
            let resampled = resample_positions(&table, old_g, new_g);
            let d = cfg.token_dim;
            let flat: Vec<f64> = resampled.into_iter().flatten().collect();
            let t = Tensor::from_vec(flat, (1, new_g * new_g + 1, d), self.device())?;
            params.replace(&name, &t)?;
        }
        Ok(Self { cfg, params })
    }
}

/// 1x1 convolution on channels-last `(B, H, W, C)` features, weights in
/// `(C_out, C_in, 1, 1)` layout. Returns `(B, H, W, C_out)`. The bias rides
/// along as an extra input column so the full-size output takes part in a
/// single graph node.
fn pixelwise(p: &ParamStore, name: &str, x: &Tensor) -> Result<Tensor> {
    let w = p.get(&format!("{name}.w"));
    let b = p.get(&format!("{name}.b"));
    let (bsz, h, wd, c) = x.dims4()?;
    let c_out = w.dim(0)?;
    let m = bsz * h * wd;
    let ones = Tensor::ones((m, 1), x.dtype(), x.device())?;
    let xa = Tensor::cat(&[&x.reshape((m, c))?, &ones], 1)?;
    let wa = Tensor::cat(&[&w.reshape((c_out, c))?.t()?, &b.unsqueeze(0)?], 0)?;
    Ok(xa.matmul(&wa)?.reshape((bsz, h, wd, c_out))?)
}

/// Bilinear resampling of a `g x g` grid of encodings (row 0 is the
/// readout token and is kept as is), align-corners style.
pub fn resample_positions(table: &[Vec<f64>], old_g: usize, new_g: usize) -> Vec<Vec<f64>> {
    let d = table[0].len();
    let mut out = vec![table[0].clone()];
    let at = |y: usize, x: usize| &table[1 + y * old_g + x];
    let coord = |i: usize| {
        if new_g == 1 {
            0.0
        } else {
            i as f64 * (old_g - 1) as f64 / (new_g - 1) as f64
        }
    };
    for y in 0..new_g {
        for x in 0..new_g {
            let (fy, fx) = (coord(y), coord(x));
            let (y0, x0) = (fy.floor() as usize, fx.floor() as usize);
            let (y1, x1) = ((y0 + 1).min(old_g - 1), (x0 + 1).min(old_g - 1));
            let (ty, tx) = (fy - y0 as f64, fx - x0 as f64);
            out.push(
                (0..d)
                    .map(|k| {
                        let top = at(y0, x0)[k] * (1.0 - tx) + at(y0, x1)[k] * tx;
                        let bot = at(y1, x0)[k] * (1.0 - tx) + at(y1, x1)[k] * tx;
                        top * (1.0 - ty) + bot * ty
                    })
                    .collect(),
            );
        }
    }
    out
}

/// Per pixel and channel the label with the highest score, lowest label on
/// ties; pixels off the mask are background. `logits` is `(H, W, 3, 256)`.
pub fn logits_to_image(logits: &Tensor, mask: &Mask) -> Result<RgbImage> {
    let (h, w, c, l) = logits.dims4()?;
    if c != 3 || l != LABELS || (w as u32, h as u32) != mask.dims() {
        return Err(Error::Shape(format!(
            "logits ({h}, {w}, {c}, {l}) do not match a {:?} mask",
            mask.dims()
        )));
    }
    let v: Vec<f32> = logits.to_dtype(DType::F32)?.flatten_all()?.to_vec1()?;
    let mut img = RgbImage::from_pixel(w as u32, h as u32, Rgb(BACKGROUND));
    for (x, y) in mask.pixels() {
        let px = y as usize * w + x as usize;
        let mut rgb = [0u8; 3];
        for (ch, out) in rgb.iter_mut().enumerate() {
            let scores = &v[(px * 3 + ch) * LABELS..(px * 3 + ch + 1) * LABELS];
            let mut best = 0;
            for lab in 1..LABELS {
                if scores[lab] > scores[best] {
                    best = lab;
                }
            }
            *out = best as u8;
        }
        img.put_pixel(x, y, Rgb(rgb));
    }
    Ok(img)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dev() -> Device {
        Device::Cpu
    }

    fn random_image(size: u32, seed: u64) -> RgbImage {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        RgbImage::from_fn(size, size, |_, _| Rgb([rng.random(), rng.random(), rng.random()]))
    }

    fn max_diff(a: &Tensor, b: &Tensor) -> f64 {
        (a - b)
            .unwrap()
            .abs()
            .unwrap()
            .flatten_all()
            .unwrap()
            .max(0)
            .unwrap()
            .to_dtype(DType::F64)
            .unwrap()
            .to_scalar()
            .unwrap()
    }

    #[test]
    fn token_count_and_readout_only_for_zero_image() {
        let cfg = ModelConfig {
            image_size: 64,
            patch_size: 16,
            token_dim: 16,
            encoder_depth: 1,
            attention_heads: 2,
            mlp_ratio: 2,
            decoder_widths: vec![8],
            heads: 1,
            use_correspondence_branch: true,
        };
        let net = BodyMapNet::new(cfg.clone(), 1, DType::F64, &dev()).unwrap();
        let img = Tensor::zeros((1, 3, 64, 64), DType::F64, &dev()).unwrap();
        let t = net.tokenize("app", &img).unwrap().0;
        assert_eq!(t.dims(), [1, 17, 16]);
        // A zero image projects to the bias, which starts at zero: tokens are
        // readout plus positional encodings.
        let pos = net.params.get("app.pos");
        let expected = Tensor::cat(
            &[
                &(pos.narrow(1, 0, 1).unwrap() + net.params.get("app.readout")).unwrap(),
                &pos.narrow(1, 1, 16).unwrap(),
            ],
            1,
        )
        .unwrap();
        assert!(max_diff(&t, &expected) < 1e-12);
    }

    #[test]
    fn swapping_patches_swaps_embeddings() {
        let cfg = ModelConfig::desk(16);
        let net = BodyMapNet::new(cfg, 2, DType::F64, &dev()).unwrap();
        let a = random_image(16, 1);
        let mut b = a.clone();
        // Swap patch (0,0) with patch (2,1) (4x4 patches).
        for dy in 0..4 {
            for dx in 0..4 {
                let p = *a.get_pixel(dx, dy);
                let q = *a.get_pixel(4 + dx, 8 + dy);
                b.put_pixel(dx, dy, q);
                b.put_pixel(4 + dx, 8 + dy, p);
            }
        }
        let m = Mask::from_fn(16, 16, |_, _| true);
        let ta = Inputs::new(&[(&a, &a, &m)], DType::F64, &dev()).unwrap().rgb;
        let tb = Inputs::new(&[(&b, &b, &m)], DType::F64, &dev()).unwrap().rgb;
        let pos = net.params.get("app.pos");
        let ea = (net.tokenize("app", &ta).unwrap().0 - pos).unwrap();
        let eb = (net.tokenize("app", &tb).unwrap().0 - pos).unwrap();
        // Token index 1 + row * 4 + col.
        let (i, j) = (1, 1 + 2 * 4 + 1);
        let row = |t: &Tensor, k: usize| t.narrow(1, k, 1).unwrap();
        assert!(max_diff(&row(&ea, i), &row(&eb, j)) < 1e-12);
        assert!(max_diff(&row(&ea, j), &row(&eb, i)) < 1e-12);
        assert!(max_diff(&row(&ea, 5), &row(&eb, 5)) < 1e-12);
    }

    #[test]
    fn branches_have_separate_weights() {
        let net = BodyMapNet::new(ModelConfig::desk(16), 3, DType::F64, &dev()).unwrap();
        let app: Vec<&String> = net.params.names().filter(|n| n.starts_with("app.")).collect();
        assert!(!app.is_empty());
        for name in app {
            let twin = name.replacen("app.", "corr.", 1);
            let a = net.params.get(name);
            let c = net.params.get(&twin);
            assert_eq!(a.dims(), c.dims());
            let ones = a.ones_like().unwrap();
            let is_constant_init = max_diff(a, &a.zeros_like().unwrap()) == 0.0 || max_diff(a, &ones) == 0.0;
            if !is_constant_init {
                assert!(max_diff(a, c) > 0.0, "{name} shares values with {twin}");
            }
        }
        // Changing an appearance weight leaves the correspondence features alone.
        let img = Tensor::randn(0f64, 0.3, (1, 3, 16, 16), &dev()).unwrap();
        let before = net.encode_correspondence(&img).unwrap();
        let w = net.params.get("app.blocks.0.mlp.fc1.w");
        net.params.set("app.blocks.0.mlp.fc1.w", &(w + 1.0).unwrap()).unwrap();
        let after = net.encode_correspondence(&img).unwrap();
        for (a, b) in before.iter().zip(&after) {
            assert_eq!(max_diff(a, b), 0.0);
        }
    }

    #[test]
    fn hooks_feed_shallow_blocks_to_fine_stages() {
        let cfg = ModelConfig {
            encoder_depth: 6,
            decoder_widths: vec![8, 8, 8, 8],
            patch_size: 8,
            ..ModelConfig::desk(32)
        };
        let hooks: Vec<usize> = (0..4).map(|i| cfg.hook(i)).collect();
        assert_eq!(hooks, vec![1, 2, 4, 5]);
        assert_eq!((0..4).map(|i| cfg.stage_size(i)).collect::<Vec<_>>(), vec![32, 16, 8, 4]);
    }

    #[test]
    fn config_validation() {
        assert!(ModelConfig::default().validate().is_ok());
        assert!(ModelConfig::desk(32).validate().is_ok());
        let bad = |f: fn(&mut ModelConfig)| {
            let mut c = ModelConfig::desk(32);
            f(&mut c);
            c.validate().is_err()
        };
        assert!(bad(|c| c.image_size = 30));
        assert!(bad(|c| c.heads = 2));
        assert!(bad(|c| c.attention_heads = 3));
        assert!(bad(|c| c.decoder_widths = vec![]));
        assert!(bad(|c| c.decoder_widths = vec![8; 4]));
    }

    #[test]
    fn layered_heads_share_the_trunk() {
        let cfg = ModelConfig {
            heads: 3,
            ..ModelConfig::desk(16)
        };
        let net = BodyMapNet::new(cfg, 4, DType::F64, &dev()).unwrap();
        let img = random_image(16, 2);
        let m = Mask::from_fn(16, 16, |x, y| x > 2 && y > 1);
        let inputs = Inputs::new(&[(&img, &img, &m)], DType::F64, &dev()).unwrap();
        let before = net.forward(&inputs).unwrap();
        assert_eq!(before.heads(), 3);
        for h in 0..3 {
            assert_eq!(before.color[h].dims(), [1, 16, 16, 3, 256]);
            assert_eq!(before.fg[h].dims(), [1, 16, 16]);
        }
        let w = net.params.get("refine.0.rcu2.c1.w");
        net.params.set("refine.0.rcu2.c1.w", &(w * 1.5).unwrap()).unwrap();
        let after = net.forward(&inputs).unwrap();
        for h in 0..3 {
            assert!(max_diff(&before.color[h], &after.color[h]) > 0.0);
        }
    }

    #[test]
    fn rgb_only_ignores_init() {
        let cfg = ModelConfig {
            use_correspondence_branch: false,
            ..ModelConfig::desk(16)
        };
        let net = BodyMapNet::new(cfg, 5, DType::F64, &dev()).unwrap();
        assert!(net.params.names().all(|n| !n.starts_with("corr.")));
        let img = random_image(16, 3);
        let m = Mask::from_fn(16, 16, |_, _| true);
        let a = net.forward(&Inputs::new(&[(&img, &random_image(16, 4), &m)], DType::F64, &dev()).unwrap()).unwrap();
        let b = net.forward(&Inputs::new(&[(&img, &random_image(16, 5), &m)], DType::F64, &dev()).unwrap()).unwrap();
        assert_eq!(max_diff(&a.color[0], &b.color[0]), 0.0);
    }

    #[test]
    fn deterministic_for_a_seed() {
        let a = BodyMapNet::new(ModelConfig::desk(16), 9, DType::F32, &dev()).unwrap();
        let b = BodyMapNet::new(ModelConfig::desk(16), 9, DType::F32, &dev()).unwrap();
        let img = random_image(16, 6);
        let m = Mask::from_fn(16, 16, |x, _| x > 3);
        let pa = a.predict(&[(&img, &img, &m)]).unwrap();
        let pb = b.predict(&[(&img, &img, &m)]).unwrap();
        assert_eq!(pa, pb);
        let c = BodyMapNet::new(ModelConfig::desk(16), 10, DType::F32, &dev()).unwrap();
        assert!(max_diff(c.params.get("app.patch.w"), a.params.get("app.patch.w")) > 0.0);
    }

    #[test]
    fn argmax_is_invariant_to_positive_head_scaling() {
        let net = BodyMapNet::new(ModelConfig::desk(16), 11, DType::F64, &dev()).unwrap();
        let img = random_image(16, 7);
        let m = Mask::from_fn(16, 16, |x, y| (x + y) % 5 != 0);
        let before = net.predict(&[(&img, &img, &m)]).unwrap();
        for name in ["head.color.w", "head.color.b"] {
            let t = net.params.get(name);
            net.params.set(name, &(t * 3.0).unwrap()).unwrap();
        }
        let after = net.predict(&[(&img, &img, &m)]).unwrap();
        assert_eq!(before, after);
        for (x, y, p) in after[0].enumerate_pixels() {
            if !m.get(x, y) {
                assert_eq!(p.0, BACKGROUND);
            }
        }
    }

    #[test]
    fn logits_to_image_matches_scan_and_breaks_ties_low() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let (h, w) = (3usize, 4usize);
        let mut v: Vec<f64> = (0..h * w * 3 * 256).map(|_| rng.random_range(-1.0..1.0)).collect();
        // Pixel 0 channel 0: tie between labels 7 and 200 at the maximum.
        v[7] = 5.0;
        v[200] = 5.0;
        let t = Tensor::from_vec(v.clone(), (h, w, 3, 256), &dev()).unwrap();
        let m = Mask::from_fn(w as u32, h as u32, |x, y| (x, y) != (3, 2));
        let img = logits_to_image(&t, &m).unwrap();
        assert_eq!(img.get_pixel(0, 0).0[0], 7);
        for (x, y) in m.pixels() {
            let px = y as usize * w + x as usize;
            for c in 0..3 {
                let row = &v[(px * 3 + c) * 256..(px * 3 + c + 1) * 256];
                let mx = row.iter().cloned().fold(f64::MIN, f64::max);
                let first = row.iter().position(|&s| s == mx).unwrap();
                assert_eq!(img.get_pixel(x, y).0[c] as usize, first);
            }
        }
        assert_eq!(img.get_pixel(3, 2).0, BACKGROUND);
    }

    #[test]
    fn outputs_are_finite_on_extreme_inputs() {
        let net = BodyMapNet::new(ModelConfig::desk(16), 12, DType::F32, &dev()).unwrap();
        let white = RgbImage::from_pixel(16, 16, Rgb([255, 255, 255]));
        let m = Mask::from_fn(16, 16, |_, _| true);
        let out = net.forward(&Inputs::new(&[(&white, &white, &m)], DType::F32, &dev()).unwrap()).unwrap();
        let v: Vec<f32> = out.color[0].flatten_all().unwrap().to_vec1().unwrap();
        assert!(v.iter().all(|x| x.is_finite()));
    }

    #[test]
    fn encoder_gradient_matches_finite_differences() {
        let net = BodyMapNet::new(ModelConfig::desk(16), 13, DType::F64, &dev()).unwrap();
        let img = candle_core::Var::from_tensor(&Tensor::randn(0f64, 0.3, (1, 3, 16, 16), &dev()).unwrap()).unwrap();
        let probe = |x: &Tensor| -> Tensor {
            let feats = net.encode_appearance(x).unwrap();
            feats.iter().map(|f| f.sin().unwrap().sum_all().unwrap()).reduce(|a, b| (a + b).unwrap()).unwrap()
        };
        let grads = probe(img.as_tensor()).backward().unwrap();
        let g: Vec<f64> = grads.get(img.as_tensor()).unwrap().flatten_all().unwrap().to_vec1().unwrap();
        let base: Vec<f64> = img.as_tensor().flatten_all().unwrap().to_vec1().unwrap();
        let step = 1e-5;
        for i in [0usize, 17, 300, 511, 767] {
            let mut p = base.clone();
            let mut m = base.clone();
            p[i] += step;
            m[i] -= step;
            let f = |v: Vec<f64>| {
                probe(&Tensor::from_vec(v, (1, 3, 16, 16), &dev()).unwrap())
                    .to_scalar::<f64>()
                    .unwrap()
            };
            let n = (f(p) - f(m)) / (2.0 * step);
            assert!((g[i] - n).abs() <= 1e-3 * g[i].abs().max(n.abs()) + 1e-9, "pixel {i}: {} vs {n}", g[i]);
        }
    }

    #[test]
    fn resampling_positions_keeps_corners_and_readout() {
        let net = BodyMapNet::new(ModelConfig::desk(16), 14, DType::F64, &dev()).unwrap();
        let big = net.with_image_size(32).unwrap();
        assert_eq!(big.cfg.grid(), 8);
        let old: Vec<Vec<f64>> = net.params.get("app.pos").squeeze(0).unwrap().to_vec2().unwrap();
        let new: Vec<Vec<f64>> = big.params.get("app.pos").squeeze(0).unwrap().to_vec2().unwrap();
        assert_eq!(new.len(), 65);
        assert_eq!(new[0], old[0]);
        assert_eq!(new[1], old[1]);
        assert_eq!(new[64], old[16]);
        let img = random_image(32, 1);
        let m = Mask::from_fn(32, 32, |_, _| true);
        assert_eq!(big.predict(&[(&img, &img, &m)]).unwrap()[0].dimensions(), (32, 32));
        // Same grid keeps the table.
        let same = resample_positions(&old, 4, 4);
        for (a, b) in same.iter().zip(&old) {
            for (x, y) in a.iter().zip(b) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(6))]
        #[test]
        fn output_shape_contract(grid in 1usize..4, batch in 1usize..3, heads in prop::sample::select(vec![1usize, 3])) {
            let cfg = ModelConfig { heads, ..ModelConfig::desk(grid * 4) };
            let net = BodyMapNet::new(cfg, 1, DType::F32, &dev()).unwrap();
            let s = (grid * 4) as u32;
            let img = random_image(s, 2);
            let m = Mask::from_fn(s, s, |_, _| true);
            let items: Vec<_> = (0..batch).map(|_| (&img, &img, &m)).collect();
            let out = net.forward(&Inputs::new(&items, DType::F32, &dev()).unwrap()).unwrap();
            prop_assert_eq!(out.heads(), heads);
            for h in 0..heads {
                prop_assert_eq!(out.color[h].dims(), &[batch, grid * 4, grid * 4, 3, 256]);
                prop_assert_eq!(out.fg[h].dims(), &[batch, grid * 4, grid * 4]);
            }
        }
    }
}
