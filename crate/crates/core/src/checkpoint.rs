//! Binary checkpoint format.
//!
//! Layout: an 8-byte magic, a little-endian u64 header length, a UTF-8
//! JSON header (format version, precision, architecture, training
//! metadata, per-layer shapes and payload byte offsets), then the raw
//! little-endian IEEE-754 weight payload in parameter order. Everything
//! in the header serializes from fixed-order structs, so saving a loaded
//! checkpoint reproduces the file byte for byte.

use crate::error::{Error, Result};
use crate::network::{CamNet, NetworkConfig};
use crate::scalar::Scalar;
use crate::train::TrainConfig;
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::{Path, PathBuf};

pub const MAGIC: &[u8; 8] = b"LSNATT01";
pub const FORMAT_VERSION: u32 = 1;

/// Provenance of the stored weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    /// Epoch the weights were taken from (the best validation epoch).
    pub epoch: usize,
    pub best_val_auc: f64,
    /// Full configuration of the run that produced the weights.
    pub config: TrainConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct LayerInfo {
    name: String,
    shape: Vec<usize>,
    /// Byte offset of this layer's values inside the payload.
    offset: u64,
}

#[derive(Serialize, Deserialize)]
struct Header {
    format_version: u32,
    precision: u8,
    network: NetworkConfig,
    meta: CheckpointMeta,
    layers: Vec<LayerInfo>,
}

/// Header fields needed before choosing a scalar type; tolerant of the
/// rest of the header so it stays readable across additive changes.
#[derive(Deserialize)]
struct Probe {
    format_version: u32,
    precision: u8,
}

#[derive(Debug, Clone)]
struct Layer<T> {
    name: String,
    shape: Vec<usize>,
    data: Vec<T>,
}

/// A trained network's weights plus everything needed to rebuild it.
#[derive(Debug, Clone)]
pub struct Checkpoint<T: Scalar> {
    pub network: NetworkConfig,
    pub meta: CheckpointMeta,
    layers: Vec<Layer<T>>,
    /// Where the bytes came from; used only for error context.
    source: PathBuf,
}

fn layer_name(index: usize, blocks: usize) -> String {
    if index < 2 * blocks {
        let part = if index % 2 == 0 { "kernel" } else { "bias" };
        format!("block{}.{part}", index / 2)
    } else if index == 2 * blocks {
        "head.weight".into()
    } else {
        "head.bias".into()
    }
}

impl<T: Scalar> Checkpoint<T> {
    /// Snapshot the network's current weights.
    pub fn from_net(net: &CamNet<T>, network: NetworkConfig, meta: CheckpointMeta) -> Result<Checkpoint<T>> {
        network.validate()?;
        let params = net.parameters();
        let expected = network.conv_channels.len() * 2 + 2;
        if params.len() != expected {
            return Err(Error::parameter(
                "checkpoint",
                format!("{} parameters but the config implies {expected}", params.len()),
            ));
        }
        let blocks = network.conv_channels.len();
        let layers = params
            .iter()
            .enumerate()
            .map(|(i, p)| Layer {
                name: layer_name(i, blocks),
                shape: p.shape().to_vec(),
                data: p.to_vec(),
            })
            .collect();
        Ok(Checkpoint { network, meta, layers, source: PathBuf::from("<unsaved>") })
    }

    /// Rebuild the network and install the stored weights.
    pub fn restore(&self) -> Result<CamNet<T>> {
        let net = CamNet::<T>::build(&self.network, 0)?;
        let params = net.parameters();
        if params.len() != self.layers.len() {
            return Err(self.shape_err(format!(
                "{} stored layers but the architecture has {} parameters",
                self.layers.len(),
                params.len()
            )));
        }
        for (p, l) in params.iter().zip(&self.layers) {
            if p.shape() != l.shape.as_slice() {
                return Err(self.shape_err(format!(
                    "layer {} stored as {:?} but the architecture expects {:?}",
                    l.name,
                    l.shape,
                    p.shape()
                )));
            }
            p.set_data(&l.data)?;
        }
        Ok(net)
    }

    /// Serialize to the on-disk byte layout.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut infos = Vec::with_capacity(self.layers.len());
        let mut offset = 0u64;
        for l in &self.layers {
            infos.push(LayerInfo { name: l.name.clone(), shape: l.shape.clone(), offset });
            offset += (l.data.len() * T::BYTE_WIDTH) as u64;
        }
        let header = Header {
            format_version: FORMAT_VERSION,
            precision: T::PRECISION,
            network: self.network.clone(),
            meta: self.meta.clone(),
            layers: infos,
        };
        let json = serde_json::to_vec(&header)?;
        let mut bytes = Vec::with_capacity(16 + json.len() + offset as usize);
        bytes.extend_from_slice(MAGIC);
        bytes.extend_from_slice(&(json.len() as u64).to_le_bytes());
        bytes.extend_from_slice(&json);
        for l in &self.layers {
            for &v in &l.data {
                v.write_le(&mut bytes);
            }
        }
        Ok(bytes)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Checkpoint<T>> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, path)
    }

    fn from_bytes(bytes: &[u8], path: &Path) -> Result<Checkpoint<T>> {
        let header = parse_header(bytes, path)?;
        if header.precision != T::PRECISION {
            return Err(Error::CheckpointShape {
                path: path.to_path_buf(),
                detail: format!(
                    "{}-bit payload cannot load into a {}-bit model",
                    header.precision,
                    T::PRECISION
                ),
            });
        }
        header.network.validate().map_err(|e| Error::CheckpointShape {
            path: path.to_path_buf(),
            detail: format!("invalid stored network config: {e}"),
        })?;
        let blocks = header.network.conv_channels.len();
        if header.layers.len() != 2 * blocks + 2 {
            return Err(Error::CheckpointShape {
                path: path.to_path_buf(),
                detail: format!(
                    "{} layer entries but the stored config implies {}",
                    header.layers.len(),
                    2 * blocks + 2
                ),
            });
        }
        // Offsets must tile the payload exactly, in order, with no gaps.
        let mut offset = 0u64;
        for (i, info) in header.layers.iter().enumerate() {
            let canonical = layer_name(i, blocks);
            if info.name != canonical {
                return Err(Error::CheckpointShape {
                    path: path.to_path_buf(),
                    detail: format!("layer {i} named {:?}, expected {canonical:?}", info.name),
                });
            }
            let count: usize = info.shape.iter().product();
            if info.shape.is_empty() || count == 0 {
                return Err(Error::CheckpointShape {
                    path: path.to_path_buf(),
                    detail: format!("layer {} has empty shape {:?}", info.name, info.shape),
                });
            }
            if info.offset != offset {
                return Err(Error::CheckpointShape {
                    path: path.to_path_buf(),
                    detail: format!(
                        "layer {} starts at byte {} but the preceding layers end at {offset}",
                        info.name, info.offset
                    ),
                });
            }
            offset += (count * T::BYTE_WIDTH) as u64;
        }
        let header_end = 16 + header_len(bytes);
        let payload = &bytes[header_end..];
        if payload.len() as u64 != offset {
            return Err(Error::CheckpointTruncated {
                path: path.to_path_buf(),
                expected: offset as usize,
                found: payload.len(),
            });
        }
        let layers = header
            .layers
            .iter()
            .map(|info| {
                let count: usize = info.shape.iter().product();
                let start = info.offset as usize;
                let data = payload[start..start + count * T::BYTE_WIDTH]
                    .chunks_exact(T::BYTE_WIDTH)
                    .map(T::read_le)
                    .collect();
                Layer { name: info.name.clone(), shape: info.shape.clone(), data }
            })
            .collect();
        Ok(Checkpoint {
            network: header.network,
            meta: header.meta,
            layers,
            source: path.to_path_buf(),
        })
    }

    fn shape_err(&self, detail: String) -> Error {
        Error::CheckpointShape { path: self.source.clone(), detail }
    }
}

fn header_len(bytes: &[u8]) -> usize {
    u64::from_le_bytes(bytes[8..16].try_into().expect("checked length")) as usize
}

/// Magic, length prefix and JSON bounds checks shared by full loads and
/// precision peeking. Returns the parsed header.
fn parse_header(bytes: &[u8], path: &Path) -> Result<Header> {
    check_preamble(bytes, path)?;
    let hlen = header_len(bytes);
    let header: Header = serde_json::from_slice(&bytes[16..16 + hlen]).map_err(|e| {
        Error::Parse { path: path.to_path_buf(), offset: 16, detail: e.to_string() }
    })?;
    if header.format_version != FORMAT_VERSION {
        return Err(Error::CheckpointVersion {
            path: path.to_path_buf(),
            found: header.format_version,
        });
    }
    Ok(header)
}

fn check_preamble(bytes: &[u8], path: &Path) -> Result<()> {
    if bytes.len() < 8 || bytes[..8] != MAGIC[..] {
        return Err(Error::CheckpointMagic { path: path.to_path_buf() });
    }
    if bytes.len() < 16 {
        return Err(Error::CheckpointTruncated {
            path: path.to_path_buf(),
            expected: 16,
            found: bytes.len(),
        });
    }
    let hlen = header_len(bytes);
    if (bytes.len() - 16) < hlen {
        return Err(Error::CheckpointTruncated {
            path: path.to_path_buf(),
            expected: 16 + hlen,
            found: bytes.len(),
        });
    }
    Ok(())
}

/// Read the element width stored in a checkpoint without committing to a
/// scalar type; drives the 32/64-bit dispatch in the CLI.
pub fn peek_precision(path: &Path) -> Result<u8> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    check_preamble(&bytes, path)?;
    let hlen = header_len(&bytes);
    let probe: Probe = serde_json::from_slice(&bytes[16..16 + hlen]).map_err(|e| {
        Error::Parse { path: path.to_path_buf(), offset: 16, detail: e.to_string() }
    })?;
    if probe.format_version != FORMAT_VERSION {
        return Err(Error::CheckpointVersion { path: path.to_path_buf(), found: probe.format_version });
    }
    Ok(probe.precision)
}
