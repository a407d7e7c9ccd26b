//! Checkpoint directory: `manifest.json` (mode, step, config, tensor table)
//! plus one raw little-endian f32 file per tensor. Adam moments are stored
//! alongside the parameters so training can resume exactly.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::adam::AdamState;
use super::nets::{Network, Param, Role};
use super::tensor::Tensor;
use super::train::{ModelBundle, TrainConfig, TrainMode};
use super::{NnError, Result};

pub const MANIFEST_FILE: &str = "manifest.json";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: [usize; 4],
    pub file: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub version: u32,
    pub mode: TrainMode,
    pub step: usize,
    pub config_hash: String,
    pub config: TrainConfig,
    pub tensors: Vec<TensorEntry>,
}

fn io_wrap(path: &Path, e: std::io::Error) -> NnError {
    NnError::Io { path: path.display().to_string(), source: e }
}

pub(crate) fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

pub fn config_hash(config: &TrainConfig) -> String {
    let json = serde_json::to_string(config).expect("config serializes");
    format!("{:016x}", fnv1a64(json.as_bytes()))
}

fn write_tensor(dir: &Path, file: &str, t: &Tensor<f32>) -> Result<()> {
    let path = dir.join(file);
    let mut buf = Vec::with_capacity(t.numel() * 4);
    for &v in t.data() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    let mut f = fs::File::create(&path).map_err(|e| io_wrap(&path, e))?;
    f.write_all(&buf).map_err(|e| io_wrap(&path, e))
}

fn read_tensor(dir: &Path, entry: &TensorEntry) -> Result<Tensor<f32>> {
    let path = dir.join(&entry.file);
    let mut buf = Vec::new();
    fs::File::open(&path).map_err(|e| io_wrap(&path, e))?.read_to_end(&mut buf).map_err(|e| io_wrap(&path, e))?;
    let expected: usize = entry.shape.iter().product::<usize>() * 4;
    if buf.len() != expected {
        return Err(NnError::Checkpoint(format!(
            "{}: {} bytes on disk, manifest implies {expected}",
            path.display(),
            buf.len()
        )));
    }
    let data: Vec<f32> = buf.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("chunk of 4"))).collect();
    Tensor::from_vec(entry.shape, data)
}

fn tensor_file_name(name: &str) -> String {
    format!("{}.bin", name.replace('.', "_"))
}

/// Save networks, Adam moments, and the resolved config.
pub fn save_checkpoint(
    dir: impl AsRef<Path>,
    bundle: &ModelBundle,
    adam: Option<&AdamState>,
    config: &TrainConfig,
) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| io_wrap(dir, e))?;

    let mut entries = Vec::new();
    for net in bundle.networks() {
        for p in &net.params {
            let name = format!("{}.{}", net.role.as_str(), p.name);
            let file = tensor_file_name(&name);
            write_tensor(dir, &file, &p.value)?;
            entries.push(TensorEntry { name, shape: p.value.shape(), file });
        }
    }
    if let Some(adam) = adam {
        let flat: Vec<&Param> = bundle.networks().iter().flat_map(|n| n.params.iter()).collect();
        if adam.m.len() != flat.len() {
            return Err(NnError::Checkpoint("adam state does not match parameter list".into()));
        }
        let named: Vec<String> = bundle
            .networks()
            .iter()
            .flat_map(|n| n.params.iter().map(move |p| format!("{}.{}", n.role.as_str(), p.name)))
            .collect();
        for (i, name) in named.iter().enumerate() {
            for (prefix, t) in [("adam.m", &adam.m[i]), ("adam.v", &adam.v[i])] {
                let full = format!("{prefix}.{name}");
                let file = tensor_file_name(&full);
                write_tensor(dir, &file, t)?;
                entries.push(TensorEntry { name: full, shape: t.shape(), file });
            }
        }
    }

    let manifest = CheckpointManifest {
        version: FORMAT_VERSION,
        mode: bundle.mode,
        step: bundle.step,
        config_hash: config_hash(config),
        config: config.clone(),
        tensors: entries,
    };
    let path = dir.join(MANIFEST_FILE);
    let json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| NnError::Checkpoint(format!("manifest serialization: {e}")))?;
    fs::write(&path, json).map_err(|e| io_wrap(&path, e))
}

/// Load a checkpoint directory back into a bundle (and the Adam state, when
/// it was saved).
pub fn load_checkpoint(dir: impl AsRef<Path>) -> Result<(ModelBundle, Option<AdamState>, TrainConfig)> {
    let dir = dir.as_ref();
    let path = dir.join(MANIFEST_FILE);
    let raw = fs::read_to_string(&path).map_err(|e| io_wrap(&path, e))?;
    let manifest: CheckpointManifest =
        serde_json::from_str(&raw).map_err(|e| NnError::Checkpoint(format!("manifest parse: {e}")))?;
    if manifest.version != FORMAT_VERSION {
        return Err(NnError::Checkpoint(format!("unsupported checkpoint version {}", manifest.version)));
    }

    let mut nets: Vec<Network> = manifest
        .mode
        .roles()
        .iter()
        .map(|&role| Network { role, params: Vec::new() })
        .collect();
    let mut adam_m = Vec::new();
    let mut adam_v = Vec::new();
    for entry in &manifest.tensors {
        let t = read_tensor(dir, entry)?;
        if let Some(rest) = entry.name.strip_prefix("adam.m.") {
            let _ = rest;
            adam_m.push(t);
        } else if let Some(rest) = entry.name.strip_prefix("adam.v.") {
            let _ = rest;
            adam_v.push(t);
        } else {
            let (role_str, param_name) = entry
                .name
                .split_once('.')
                .ok_or_else(|| NnError::Checkpoint(format!("bad tensor name {}", entry.name)))?;
            let net = nets
                .iter_mut()
                .find(|n| n.role.as_str() == role_str)
                .ok_or_else(|| NnError::Checkpoint(format!("tensor {} has no matching network", entry.name)))?;
            net.params.push(Param { name: param_name.to_string(), value: t });
        }
    }
    for net in &nets {
        if net.params.is_empty() {
            return Err(NnError::Checkpoint(format!("checkpoint lacks parameters for {}", net.role.as_str())));
        }
    }

    let adam = if adam_m.is_empty() {
        None
    } else {
        if adam_m.len() != adam_v.len() {
            return Err(NnError::Checkpoint("uneven adam moment tables".into()));
        }
        Some(AdamState { m: adam_m, v: adam_v, t: manifest.step })
    };

    let bundle = ModelBundle { mode: manifest.mode, nets, step: manifest.step };
    Ok((bundle, adam, manifest.config))
}

impl ModelBundle {
    /// Networks in the fixed role order of this mode.
    pub fn networks(&self) -> &[Network] {
        &self.nets
    }

    pub fn network(&self, role: Role) -> Option<&Network> {
        self.nets.iter().find(|n| n.role == role)
    }
}
