//! Single-file checkpoints: named tensors in safetensors layout with the
//! model configuration echoed into the header metadata.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use candle_core::safetensors::Load;
use candle_core::{Device, Tensor};
use safetensors::SafeTensors;

use super::{BodyMapNet, ModelConfig};
use crate::error::{Error, Result};
use crate::net::params::ParamStore;

const FORMAT: &str = "bodymap-checkpoint";
const VERSION: &str = "1";

/// Extra metadata stored alongside the weights.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CheckpointInfo {
    pub step: u64,
    /// Free-form JSON, e.g. the training configuration.
    pub extra: Option<String>,
}

pub fn save(net: &BodyMapNet, info: &CheckpointInfo, path: &Path) -> Result<()> {
    let mut meta = HashMap::new();
    meta.insert("format".to_string(), FORMAT.to_string());
    meta.insert("version".to_string(), VERSION.to_string());
    meta.insert("config".to_string(), serde_json::to_string(&net.cfg)?);
    meta.insert("step".to_string(), info.step.to_string());
    if let Some(extra) = &info.extra {
        meta.insert("extra".to_string(), extra.clone());
    }
    let tensors: Vec<(String, Tensor)> = net
        .params
        .tensors()
        .into_iter()
        .map(|(k, t)| Ok((k, t.contiguous()?)))
        .collect::<Result<_>>()?;
    let bytes = safetensors::serialize(tensors.iter().map(|(k, t)| (k.as_str(), t)), Some(meta))
        .map_err(|e| Error::CorruptCheckpoint {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// Loads a checkpoint. With `expected` set, every parameter of that config
/// must be present with the same shape; the first offending name in sorted
/// order is reported otherwise.
pub fn load(path: &Path, expected: Option<&ModelConfig>, device: &Device) -> Result<(BodyMapNet, CheckpointInfo)> {
    let corrupt = |reason: String| Error::CorruptCheckpoint {
        path: path.to_path_buf(),
        reason,
    };
    let bytes = std::fs::read(path)?;
    let (_, header) = SafeTensors::read_metadata(&bytes).map_err(|e| corrupt(e.to_string()))?;
    let st = SafeTensors::deserialize(&bytes).map_err(|e| corrupt(e.to_string()))?;
    let meta = header.metadata().clone().unwrap_or_default();
    if meta.get("format").map(String::as_str) != Some(FORMAT) {
        return Err(corrupt("not a model checkpoint".into()));
    }
    if meta.get("version").map(String::as_str) != Some(VERSION) {
        return Err(corrupt(format!("unsupported version {:?}", meta.get("version"))));
    }
    let stored: ModelConfig = serde_json::from_str(meta.get("config").ok_or_else(|| corrupt("missing config".into()))?)
        .map_err(|e| corrupt(format!("config: {e}")))?;
    let cfg = expected.cloned().unwrap_or(stored);
    cfg.validate()?;
    let mut tensors = BTreeMap::new();
    for (name, view) in st.tensors() {
        tensors.insert(name, view.load(device)?);
    }
    let mut specs = cfg.param_specs();
    specs.sort_by(|a, b| a.name.cmp(&b.name));
    let dtype = tensors
        .values()
        .next()
        .map(|t| t.dtype())
        .ok_or_else(|| corrupt("no tensors".into()))?;
    for spec in &specs {
        match tensors.get(&spec.name) {
            None => {
                return Err(Error::CheckpointMismatch(format!(
                    "parameter `{}` of shape {:?} is missing",
                    spec.name, spec.shape
                )))
            }
            Some(t) if t.dims() != spec.shape.as_slice() => {
                return Err(Error::CheckpointMismatch(format!(
                    "parameter `{}` has shape {:?} in the checkpoint, config expects {:?}",
                    spec.name,
                    t.dims(),
                    spec.shape
                )))
            }
            Some(_) => {}
        }
    }
    if let Some(extra) = tensors.keys().find(|k| !specs.iter().any(|s| &s.name == *k)) {
        return Err(Error::CheckpointMismatch(format!("unexpected parameter `{extra}`")));
    }
    let info = CheckpointInfo {
        step: meta.get("step").and_then(|s| s.parse().ok()).unwrap_or(0),
        extra: meta.get("extra").cloned(),
    };
    let params = ParamStore::from_tensors(tensors, dtype, device)?;
    Ok((BodyMapNet { cfg, params }, info))
}

#[cfg(test)]
mod tests {
    use super::*;
    use candle_core::DType;

    #[test]
    fn round_trip_is_bit_exact() {
        let dev = Device::Cpu;
        let net = BodyMapNet::new(ModelConfig::desk(16), 3, DType::F32, &dev).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.safetensors");
        let info = CheckpointInfo {
            step: 42,
            extra: Some("{\"lr\":0.001}".into()),
        };
        save(&net, &info, &path).unwrap();
        let (back, got) = load(&path, None, &dev).unwrap();
        assert_eq!(got, info);
        assert_eq!(back.cfg, net.cfg);
        for (name, t) in net.params.tensors() {
            let a: Vec<f32> = t.flatten_all().unwrap().to_vec1().unwrap();
            let b: Vec<f32> = back.params.get(&name).flatten_all().unwrap().to_vec1().unwrap();
            assert_eq!(a, b, "{name}");
        }
    }

    #[test]
    fn truncated_file_is_reported() {
        let dev = Device::Cpu;
        let net = BodyMapNet::new(ModelConfig::desk(16), 3, DType::F32, &dev).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.safetensors");
        save(&net, &CheckpointInfo::default(), &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();
        assert!(matches!(load(&path, None, &dev), Err(Error::CorruptCheckpoint { .. })));
    }

    #[test]
    fn head_count_mismatch_names_a_parameter() {
        let dev = Device::Cpu;
        let net = BodyMapNet::new(ModelConfig::desk(16), 3, DType::F32, &dev).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.safetensors");
        save(&net, &CheckpointInfo::default(), &path).unwrap();
        let layered = ModelConfig {
            heads: 3,
            ..ModelConfig::desk(16)
        };
        match load(&path, Some(&layered), &dev) {
            Err(Error::CheckpointMismatch(msg)) => assert!(msg.contains("head.color.b"), "{msg}"),
            other => panic!("{other:?}"),
        }
    }
}
