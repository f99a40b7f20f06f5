//! SCN1 model files (little-endian).
//!
//! ```text
//! magic            "SCN1"
//! version          u32 (= 1)
//! channels         u32
//! slices           u32
//! side             u32
//! layer count      u32
//! per layer        kind u8, out_maps u32, kh u32, kw u32, stride u32
//! norm stats       6 × (mean f64, std f64)
//! per layer        weights then biases, f32
//! ```
//!
//! Weights follow the in-memory order: first layer kernel-major, then
//! channel, then slice, then kernel rows; later layers output-map-major,
//! then input map, then kernel rows.

use std::fs;
use std::path::Path;

use super::config::{Architecture, LayerKind, LayerSpec};
use super::model::ScnModel;
use super::NetError;
use crate::cubegen::{NormStats, CHANNELS};

const MAGIC: &[u8; 4] = b"SCN1";
pub const FORMAT_VERSION: u32 = 1;
const LAYER_RECORD: usize = 1 + 4 * 4;
const NORM_BLOCK: usize = CHANNELS * 2 * 8;

/// Exact file size of a model with this architecture.
pub fn model_file_size(arch: &Architecture) -> usize {
    let header = 4 + 4 + 3 * 4 + 4 + arch.layers.len() * LAYER_RECORD;
    header + NORM_BLOCK + 4 * super::analysis::param_count(arch)
}

pub fn encode_model(model: &ScnModel<f32>) -> Vec<u8> {
    let arch = &model.arch;
    let mut out = Vec::with_capacity(model_file_size(arch));
    let u32le = |out: &mut Vec<u8>, v: usize| out.extend_from_slice(&(v as u32).to_le_bytes());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    u32le(&mut out, arch.channels);
    u32le(&mut out, arch.slices);
    u32le(&mut out, arch.side);
    u32le(&mut out, arch.layers.len());
    for l in &arch.layers {
        out.push(l.kind.code());
        u32le(&mut out, l.out_maps);
        u32le(&mut out, l.kernel.0);
        u32le(&mut out, l.kernel.1);
        u32le(&mut out, l.stride);
    }
    for c in 0..CHANNELS {
        out.extend_from_slice(&model.norm.mean[c].to_le_bytes());
        out.extend_from_slice(&model.norm.std[c].to_le_bytes());
    }
    for layer in &model.layers {
        for v in layer.weights.iter().chain(&layer.bias) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], NetError> {
        if self.pos + n > self.bytes.len() {
            return Err(NetError::Format(format!(
                "truncated model: need {} bytes at offset {}, have {}",
                n,
                self.pos,
                self.bytes.len()
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, NetError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<usize, NetError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }

    fn f64(&mut self) -> Result<f64, NetError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn decode_model(bytes: &[u8]) -> Result<ScnModel<f32>, NetError> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(NetError::Format("bad magic, expected \"SCN1\"".into()));
    }
    let version = r.u32()? as u32;
    if version != FORMAT_VERSION {
        return Err(NetError::Format(format!("unsupported version {version}")));
    }
    let channels = r.u32()?;
    let slices = r.u32()?;
    let side = r.u32()?;
    let n_layers = r.u32()?;
    if n_layers > 1024 {
        return Err(NetError::Format(format!("implausible layer count {n_layers}")));
    }
    let mut layers = Vec::with_capacity(n_layers);
    for _ in 0..n_layers {
        let code = r.u8()?;
        let kind = LayerKind::from_code(code)
            .ok_or_else(|| NetError::Format(format!("unknown layer kind {code}")))?;
        let out_maps = r.u32()?;
        let kh = r.u32()?;
        let kw = r.u32()?;
        let stride = r.u32()?;
        layers.push(LayerSpec {
            kind,
            out_maps,
            kernel: (kh, kw),
            stride,
        });
    }
    let arch = Architecture {
        channels,
        slices,
        side,
        layers,
    };
    arch.validate()
        .map_err(|e| NetError::Format(format!("invalid architecture in model file: {e}")))?;
    if channels != CHANNELS {
        return Err(NetError::Format(format!("expected {CHANNELS} channels, found {channels}")));
    }
    let expected = model_file_size(&arch);
    if bytes.len() != expected {
        return Err(NetError::Format(format!(
            "model file is {} bytes, architecture implies {expected}",
            bytes.len()
        )));
    }
    let mut norm = NormStats::identity();
    for c in 0..CHANNELS {
        norm.mean[c] = r.f64()?;
        norm.std[c] = r.f64()?;
    }
    let mut model = ScnModel::<f32>::zeros(&arch)?;
    model.norm = norm;
    for layer in &mut model.layers {
        for v in layer.weights.iter_mut().chain(layer.bias.iter_mut()) {
            *v = f32::from_le_bytes(r.take(4)?.try_into().unwrap());
            if !v.is_finite() {
                return Err(NetError::Format("non-finite parameter".into()));
            }
        }
    }
    Ok(model)
}

pub fn save_model(model: &ScnModel<f32>, path: impl AsRef<Path>) -> Result<(), NetError> {
    let path = path.as_ref();
    fs::write(path, encode_model(model)).map_err(|e| NetError::Io(path.to_path_buf(), e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<ScnModel<f32>, NetError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| NetError::Io(path.to_path_buf(), e))?;
    decode_model(&bytes)
}
