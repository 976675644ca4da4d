//! Model files: the detector cascade and the landmark-network layout as JSON,
//! and landmark-network weights in a binary format.
//!
//! Weights layout: an ASCII header, then every parameter as a little-endian
//! f32, network by network and layer by layer (weights before biases). The
//! header names each network and gives each layer's parameter shape, so a
//! file can be checked against a layout before any value is read:
//!
//! ```text
//! DTDW 1
//! networks 23
//! net F1 14
//! layer conv 6x1x4x4 6
//! layer relu - 0
//! layer pool - 0
//! ...
//! layer fc 10x32 10
//! ...
//! end
//! ```
//!
//! Values are computed in f64 and stored as f32, so a load/save cycle of a
//! loaded file is byte-exact.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use dtd_core::detector::CascadeModel;
use dtd_core::net::{CascadeSpec, LandmarkCascade, LayerSpec, NetworkWeights};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::DtdError;

const MAGIC: &str = "DTDW 1";

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, DtdError> {
    let text = fs::read_to_string(path).map_err(|e| DtdError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| DtdError::json(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), DtdError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| DtdError::json(path, e))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| DtdError::io(path, e))
}

/// Load and validate a detector cascade.
pub fn load_cascade_model(path: &Path) -> Result<CascadeModel, DtdError> {
    let model: CascadeModel = read_json(path)?;
    model.validate()?;
    Ok(model)
}

/// Load and validate a landmark-network layout.
pub fn load_net_config(path: &Path) -> Result<CascadeSpec, DtdError> {
    let spec: CascadeSpec = read_json(path)?;
    spec.validate()?;
    Ok(spec)
}

fn layer_line(layer: &LayerSpec, (c, h, w): (usize, usize, usize)) -> String {
    match *layer {
        LayerSpec::Conv { out_channels, kernel_h, kernel_w, .. } => {
            format!("layer conv {out_channels}x{c}x{kernel_h}x{kernel_w} {out_channels}")
        }
        LayerSpec::FullyConnected { out_units } => format!("layer fc {out_units}x{} {out_units}", c * h * w),
        LayerSpec::Relu => "layer relu - 0".into(),
        LayerSpec::MaxPool { .. } => "layer pool - 0".into(),
    }
}

fn header(spec: &CascadeSpec) -> Result<String, DtdError> {
    let mut s = String::new();
    writeln!(s, "{MAGIC}").unwrap();
    writeln!(s, "networks {}", spec.networks.len()).unwrap();
    for net in &spec.networks {
        let shapes = net.shapes()?;
        writeln!(s, "net {} {}", net.name, net.layers.len()).unwrap();
        for (layer, shape) in net.layers.iter().zip(&shapes) {
            writeln!(s, "{}", layer_line(layer, *shape)).unwrap();
        }
    }
    s.push_str("end\n");
    Ok(s)
}

pub fn encode_weights(cascade: &LandmarkCascade) -> Result<Vec<u8>, DtdError> {
    let mut out = header(cascade.spec())?.into_bytes();
    for net in cascade.weights() {
        for v in net.params() {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    Ok(out)
}

/// Decode weights for the layout `spec`. The header must describe exactly
/// that layout.
pub fn decode_weights(bytes: &[u8], spec: &CascadeSpec) -> Result<LandmarkCascade, String> {
    let expected = header(spec).map_err(|e| e.to_string())?;
    let end = find_header_end(bytes).ok_or("missing header terminator")?;
    let found = std::str::from_utf8(&bytes[..end]).map_err(|_| "header is not text")?;
    if !found.starts_with(MAGIC) {
        return Err("not a weights file".into());
    }
    if found != expected {
        let diff = found
            .lines()
            .zip(expected.lines())
            .find(|(a, b)| a != b)
            .map(|(a, b)| format!("header line {a:?} does not match layout {b:?}"))
            .unwrap_or_else(|| "header does not match the network layout".into());
        return Err(diff);
    }
    let mut values = bytes[end..].chunks_exact(4).map(|c| f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]])));
    let payload = bytes.len() - end;
    let mut weights = Vec::with_capacity(spec.networks.len());
    for net in &spec.networks {
        let mut w = NetworkWeights::zeros(net).map_err(|e| e.to_string())?;
        for p in w.params_mut() {
            *p = values.next().ok_or("payload is truncated")?;
        }
        weights.push(w);
    }
    if values.next().is_some() || !payload.is_multiple_of(4) {
        return Err("trailing bytes after payload".into());
    }
    LandmarkCascade::new(spec.clone(), weights).map_err(|e| e.to_string())
}

fn find_header_end(bytes: &[u8]) -> Option<usize> {
    const TERM: &[u8] = b"\nend\n";
    bytes.windows(TERM.len()).position(|w| w == TERM).map(|p| p + TERM.len())
}

pub fn save_weights(path: &Path, cascade: &LandmarkCascade) -> Result<(), DtdError> {
    let bytes = encode_weights(cascade)?;
    fs::write(path, bytes).map_err(|e| DtdError::io(path, e))
}

pub fn load_weights(path: &Path, spec: &CascadeSpec) -> Result<LandmarkCascade, DtdError> {
    let bytes = fs::read(path).map_err(|e| DtdError::io(path, e))?;
    decode_weights(&bytes, spec).map_err(|reason| DtdError::BadWeights { path: path.to_path_buf(), reason })
}

/// Round every parameter to f32, as a save/load cycle would.
pub fn quantize_to_f32(cascade: &LandmarkCascade) -> LandmarkCascade {
    let (spec, mut weights) = cascade.clone().into_parts();
    for w in &mut weights {
        for p in w.params_mut() {
            *p = f64::from(*p as f32);
        }
    }
    LandmarkCascade::new(spec, weights).expect("rounding keeps shapes")
}
