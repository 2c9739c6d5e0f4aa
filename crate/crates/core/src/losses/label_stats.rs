//! Fused per-row statistics of 256-way scores.
//!
//! For each row `z` of the last axis, with `p = softmax(z)`:
//! `[log p[label], Σ_l l · p_l]`. Both the classification term and the
//! expected color need only these two numbers, so one pass over the scores
//! replaces a chain of full-size elementwise ops, forward and backward.

use candle_core::{CpuStorage, CustomOp2, CustomOp3, DType, Layout, Shape, Tensor, WithDType};

use crate::error::Result;

struct LabelStats;
struct LabelStatsGrad;

fn contiguous<'a, T>(data: &'a [T], layout: &Layout) -> candle_core::Result<&'a [T]> {
    match layout.contiguous_offsets() {
        Some((a, b)) => Ok(&data[a..b]),
        None => candle_core::bail!("label_stats expects contiguous inputs"),
    }
}

/// Max-shifted exponentials of one row and their sum.
fn softmax_row<T: WithDType>(z: &[T], p: &mut [f64]) -> f64 {
    let m = z.iter().map(|v| v.to_f64()).fold(f64::NEG_INFINITY, f64::max);
    let mut s = 0.0;
    for (pi, zi) in p.iter_mut().zip(z) {
        *pi = (zi.to_f64() - m).exp();
        s += *pi;
    }
    for pi in p.iter_mut() {
        *pi /= s;
    }
    m + s.ln()
}

fn stats_rows<T: WithDType>(z: &[T], labels: &[u32], l: usize) -> Vec<T> {
    let mut p = vec![0.0; l];
    let mut out = Vec::with_capacity(2 * labels.len());
    for (row, &lab) in z.chunks_exact(l).zip(labels) {
        let lse = softmax_row(row, &mut p);
        let e: f64 = p.iter().enumerate().map(|(i, pi)| i as f64 * pi).sum();
        out.push(T::from_f64(row[lab as usize].to_f64() - lse));
        out.push(T::from_f64(e));
    }
    out
}

fn grad_rows<T: WithDType>(z: &[T], labels: &[u32], g: &[T], l: usize) -> Vec<T> {
    let mut p = vec![0.0; l];
    let mut out = Vec::with_capacity(z.len());
    for ((row, &lab), gr) in z.chunks_exact(l).zip(labels).zip(g.chunks_exact(2)) {
        softmax_row(row, &mut p);
        let (g0, g1) = (gr[0].to_f64(), gr[1].to_f64());
        let e: f64 = p.iter().enumerate().map(|(i, pi)| i as f64 * pi).sum();
        for (i, pi) in p.iter().enumerate() {
            let onehot = if i == lab as usize { 1.0 } else { 0.0 };
            out.push(T::from_f64(g0 * (onehot - pi) + g1 * pi * (i as f64 - e)));
        }
    }
    out
}

fn row_len(layout: &Layout) -> usize {
    *layout.dims().last().unwrap_or(&1)
}

impl CustomOp2 for LabelStats {
    fn name(&self) -> &'static str {
        "label-stats"
    }

    fn cpu_fwd(&self, s1: &CpuStorage, l1: &Layout, s2: &CpuStorage, l2: &Layout) -> candle_core::Result<(CpuStorage, Shape)> {
        let l = row_len(l1);
        let labels = match s2 {
            CpuStorage::U32(v) => contiguous(v, l2)?,
            _ => candle_core::bail!("label_stats expects u32 labels"),
        };
        let mut dims = l1.dims().to_vec();
        *dims.last_mut().expect("rank >= 1") = 2;
        let out = match s1 {
            CpuStorage::F32(v) => CpuStorage::F32(stats_rows(contiguous(v, l1)?, labels, l)),
            CpuStorage::F64(v) => CpuStorage::F64(stats_rows(contiguous(v, l1)?, labels, l)),
            _ => candle_core::bail!("label_stats expects f32 or f64 scores"),
        };
        Ok((out, Shape::from(dims)))
    }

    fn bwd(&self, z: &Tensor, labels: &Tensor, _res: &Tensor, grad: &Tensor) -> candle_core::Result<(Option<Tensor>, Option<Tensor>)> {
        let g = z.apply_op3_no_bwd(labels, &grad.contiguous()?, &LabelStatsGrad)?;
        Ok((Some(g), None))
    }
}

impl CustomOp3 for LabelStatsGrad {
    fn name(&self) -> &'static str {
        "label-stats-grad"
    }

    fn cpu_fwd(
        &self,
        s1: &CpuStorage,
        l1: &Layout,
        s2: &CpuStorage,
        l2: &Layout,
        s3: &CpuStorage,
        l3: &Layout,
    ) -> candle_core::Result<(CpuStorage, Shape)> {
        let l = row_len(l1);
        let labels = match s2 {
            CpuStorage::U32(v) => contiguous(v, l2)?,
            _ => candle_core::bail!("label_stats expects u32 labels"),
        };
        let out = match (s1, s3) {
            (CpuStorage::F32(z), CpuStorage::F32(g)) => CpuStorage::F32(grad_rows(contiguous(z, l1)?, labels, contiguous(g, l3)?, l)),
            (CpuStorage::F64(z), CpuStorage::F64(g)) => CpuStorage::F64(grad_rows(contiguous(z, l1)?, labels, contiguous(g, l3)?, l)),
            _ => candle_core::bail!("label_stats: mismatched dtypes"),
        };
        Ok((out, l1.shape().clone()))
    }
}

/// `[log softmax(z)[label], Σ_l l · softmax(z)_l]` over the last axis of
/// `scores`. `labels` has the shape of `scores` without its last axis.
pub fn label_stats(scores: &Tensor, labels: &Tensor) -> Result<Tensor> {
    let dims = scores.dims();
    if labels.dims() != &dims[..dims.len().saturating_sub(1)] || labels.dtype() != DType::U32 {
        return Err(crate::Error::Shape(format!(
            "label_stats: scores {:?} need u32 labels of shape {:?}, got {:?} {:?}",
            dims,
            &dims[..dims.len().saturating_sub(1)],
            labels.dims(),
            labels.dtype()
        )));
    }
    Ok(scores.contiguous()?.apply_op2(&labels.contiguous()?, LabelStats)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::layers::log_softmax;
    use candle_core::{Device, Var};

    fn composed(z: &Tensor, labels: &Tensor) -> Tensor {
        let logp = log_softmax(z, 1).unwrap();
        let picked = logp.gather(&labels.unsqueeze(1).unwrap(), 1).unwrap();
        let idx = Tensor::arange(0f64, 256.0, z.device()).unwrap().reshape((256, 1)).unwrap();
        let e = logp.exp().unwrap().matmul(&idx).unwrap();
        Tensor::cat(&[&picked, &e], 1).unwrap()
    }

    #[test]
    fn matches_composed_ops_forward_and_backward() {
        let dev = Device::Cpu;
        let z = Var::from_tensor(&(Tensor::randn(0f64, 1.0, (7, 256), &dev).unwrap() * 3.0).unwrap()).unwrap();
        let labels = Tensor::new(&[0u32, 255, 17, 128, 3, 3, 200], &dev).unwrap();
        let mix = Tensor::randn(0f64, 1.0, (7, 2), &dev).unwrap();
        let fused = label_stats(z.as_tensor(), &labels).unwrap();
        let reference = composed(z.as_tensor(), &labels);
        let diff = |a: &Tensor, b: &Tensor| -> f64 {
            (a - b).unwrap().abs().unwrap().max_all().unwrap().to_scalar().unwrap()
        };
        assert!(diff(&fused, &reference) < 1e-10);
        let gf = (fused * &mix).unwrap().sum_all().unwrap().backward().unwrap();
        let gr = (reference * &mix).unwrap().sum_all().unwrap().backward().unwrap();
        assert!(diff(gf.get(z.as_tensor()).unwrap(), gr.get(z.as_tensor()).unwrap()) < 1e-10);
    }

    #[test]
    fn rejects_mismatched_labels() {
        let dev = Device::Cpu;
        let z = Tensor::zeros((2, 3, 256), DType::F32, &dev).unwrap();
        assert!(label_stats(&z, &Tensor::zeros((2, 4), DType::U32, &dev).unwrap()).is_err());
        assert!(label_stats(&z, &Tensor::zeros((2, 3), DType::F32, &dev).unwrap()).is_err());
    }
}
