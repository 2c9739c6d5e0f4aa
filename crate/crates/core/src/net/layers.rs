//! Stateless building blocks evaluated against a [`ParamStore`].

use candle_core::{Tensor, D};

use super::params::{Init, ParamSpec, ParamStore};
use crate::error::Result;

const LN_EPS: f64 = 1e-6;

pub(crate) fn spec(name: String, shape: &[usize], init: Init) -> ParamSpec {
    ParamSpec {
        name,
        shape: shape.to_vec(),
        init,
    }
}

pub(crate) fn linear_specs(out: &mut Vec<ParamSpec>, name: &str, fan_in: usize, fan_out: usize) {
    out.push(spec(format!("{name}.w"), &[fan_in, fan_out], Init::Normal((1.0 / fan_in as f64).sqrt())));
    out.push(spec(format!("{name}.b"), &[fan_out], Init::Zeros));
}

pub(crate) fn conv_specs(out: &mut Vec<ParamSpec>, name: &str, c_in: usize, c_out: usize, k: usize, std_scale: f64) {
    let fan_in = c_in * k * k;
    out.push(spec(
        format!("{name}.w"),
        &[c_out, c_in, k, k],
        Init::Normal(std_scale * (2.0 / fan_in as f64).sqrt()),
    ));
    out.push(spec(format!("{name}.b"), &[c_out], Init::Zeros));
}

pub(crate) fn layer_norm_specs(out: &mut Vec<ParamSpec>, name: &str, dim: usize) {
    out.push(spec(format!("{name}.g"), &[dim], Init::Ones));
    out.push(spec(format!("{name}.b"), &[dim], Init::Zeros));
}

/// `x @ w + b` over the last axis of a rank-3 input.
pub fn linear(p: &ParamStore, name: &str, x: &Tensor) -> Result<Tensor> {
    let w = p.get(&format!("{name}.w"));
    let b = p.get(&format!("{name}.b"));
    let (bsz, n, d) = x.dims3()?;
    let y = x.reshape((bsz * n, d))?.matmul(w)?.broadcast_add(b)?;
    Ok(y.reshape((bsz, n, w.dim(1)?))?)
}

pub fn layer_norm(p: &ParamStore, name: &str, x: &Tensor) -> Result<Tensor> {
    let g = p.get(&format!("{name}.g"));
    let b = p.get(&format!("{name}.b"));
    let mean = x.mean_keepdim(D::Minus1)?;
    let centered = x.broadcast_sub(&mean)?;
    let var = centered.sqr()?.mean_keepdim(D::Minus1)?;
    let normed = centered.broadcast_div(&(var + LN_EPS)?.sqrt()?)?;
    Ok(normed.broadcast_mul(g)?.broadcast_add(b)?)
}

/// Softmax over the last axis. The shift by the row maximum is detached:
/// it cancels analytically, so treating it as constant is exact.
pub fn softmax_last(x: &Tensor) -> Result<Tensor> {
    let m = x.max_keepdim(D::Minus1)?.detach();
    let e = x.broadcast_sub(&m)?.exp()?;
    Ok(e.broadcast_div(&e.sum_keepdim(D::Minus1)?)?)
}

/// Log-softmax over axis `dim`, same stabilization as [`softmax_last`].
pub fn log_softmax(x: &Tensor, dim: usize) -> Result<Tensor> {
    let m = x.max_keepdim(dim)?.detach();
    let shifted = x.broadcast_sub(&m)?;
    let lse = shifted.exp()?.sum_keepdim(dim)?.log()?;
    Ok(shifted.broadcast_sub(&lse)?)
}

/// Stride-1 square convolution with zero padding, written as shifted
/// slices and one matmul. Equivalent to `Tensor::conv2d`; the backward pass
/// stays on matmul kernels, which are much faster on CPU.
pub fn conv2d(p: &ParamStore, name: &str, x: &Tensor, padding: usize) -> Result<Tensor> {
    let w = p.get(&format!("{name}.w"));
    let b = p.get(&format!("{name}.b"));
    let (c_out, c_in, k, _) = w.dims4()?;
    let (bsz, c, h, wd) = x.dims4()?;
    if c != c_in {
        return Err(crate::Error::Shape(format!("{name}: {c} input channels, weights expect {c_in}")));
    }
    let (oh, ow) = (h + 2 * padding + 1 - k, wd + 2 * padding + 1 - k);
    let cols = if k == 1 && padding == 0 {
        x.reshape((bsz, c, h * wd))?
    } else {
        let xp = x.pad_with_zeros(2, padding, padding)?.pad_with_zeros(3, padding, padding)?;
        let mut shifts = Vec::with_capacity(k * k);
        for dy in 0..k {
            for dx in 0..k {
                shifts.push(xp.narrow(2, dy, oh)?.narrow(3, dx, ow)?);
            }
        }
        Tensor::stack(&shifts, 2)?.reshape((bsz, c * k * k, oh * ow))?
    };
    let y = w.reshape((c_out, c_in * k * k))?.broadcast_matmul(&cols)?;
    Ok(y.broadcast_add(&b.reshape((1, c_out, 1))?)?.reshape((bsz, c_out, oh, ow))?)
}

/// Multi-head self-attention over `(B, N, D)`.
pub fn attention(p: &ParamStore, name: &str, x: &Tensor, heads: usize) -> Result<Tensor> {
    let (bsz, n, d) = x.dims3()?;
    let hd = d / heads;
    let qkv = linear(p, &format!("{name}.qkv"), x)?
        .reshape((bsz, n, 3, heads, hd))?
        .permute((2, 0, 3, 1, 4))?;
    let q = qkv.get(0)?.contiguous()?;
    let k = qkv.get(1)?.contiguous()?;
    let v = qkv.get(2)?.contiguous()?;
    let scores = (q.matmul(&k.t()?.contiguous()?)? * (1.0 / (hd as f64).sqrt()))?;
    let attn = softmax_last(&scores)?;
    let out = attn.matmul(&v)?.permute((0, 2, 1, 3))?.reshape((bsz, n, d))?;
    linear(p, &format!("{name}.proj"), &out)
}

pub(crate) fn block_specs(out: &mut Vec<ParamSpec>, name: &str, dim: usize, mlp_ratio: usize) {
    layer_norm_specs(out, &format!("{name}.ln1"), dim);
    linear_specs(out, &format!("{name}.attn.qkv"), dim, 3 * dim);
    linear_specs(out, &format!("{name}.attn.proj"), dim, dim);
    layer_norm_specs(out, &format!("{name}.ln2"), dim);
    linear_specs(out, &format!("{name}.mlp.fc1"), dim, mlp_ratio * dim);
    linear_specs(out, &format!("{name}.mlp.fc2"), mlp_ratio * dim, dim);
}

/// Pre-norm transformer block.
pub fn block(p: &ParamStore, name: &str, x: &Tensor, heads: usize) -> Result<Tensor> {
    let h = layer_norm(p, &format!("{name}.ln1"), x)?;
    let x = (x + attention(p, &format!("{name}.attn"), &h, heads)?)?;
    let h = layer_norm(p, &format!("{name}.ln2"), &x)?;
    let h = linear(p, &format!("{name}.mlp.fc1"), &h)?.gelu_erf()?;
    let h = linear(p, &format!("{name}.mlp.fc2"), &h)?;
    Ok((x + h)?)
}

pub(crate) fn rcu_specs(out: &mut Vec<ParamSpec>, name: &str, c: usize) {
    conv_specs(out, &format!("{name}.c1"), c, c, 3, 1.0);
    conv_specs(out, &format!("{name}.c2"), c, c, 3, 0.5);
}

/// Residual convolutional unit: `x + conv(relu(conv(relu(x))))`.
pub fn rcu(p: &ParamStore, name: &str, x: &Tensor) -> Result<Tensor> {
    let h = conv2d(p, &format!("{name}.c1"), &x.relu()?, 1)?;
    let h = conv2d(p, &format!("{name}.c2"), &h.relu()?, 1)?;
    Ok((x + h)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use candle_core::{DType, Device};

    #[test]
    fn conv_matches_library_convolution() {
        let dev = Device::Cpu;
        for (k, pad) in [(1, 0), (3, 1), (3, 0)] {
            let mut specs = Vec::new();
            conv_specs(&mut specs, "c", 4, 5, k, 1.0);
            specs[1].init = Init::Normal(0.3);
            let p = ParamStore::init(&specs, 3, DType::F64, &dev).unwrap();
            let x = Tensor::randn(0f64, 1.0, (2, 4, 6, 7), &dev).unwrap();
            let ours = conv2d(&p, "c", &x, pad).unwrap();
            let lib = x
                .conv2d(p.get("c.w"), pad, 1, 1, 1)
                .unwrap()
                .broadcast_add(&p.get("c.b").reshape((1, 5, 1, 1)).unwrap())
                .unwrap();
            assert_eq!(ours.dims(), lib.dims());
            let diff: f64 = (ours - lib).unwrap().abs().unwrap().max_all().unwrap().to_scalar().unwrap();
            assert!(diff < 1e-12, "k={k}: {diff}");
        }
    }
}
