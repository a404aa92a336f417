//! `LTCNNCP1` checkpoints.
//!
//! Layout: 8-byte magic, little-endian u32 header length, UTF-8 JSON header,
//! then the little-endian f32 payload. Tensors are located through the
//! header's `tensor_index` (payload-relative offsets), never by position.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{Network, NetworkSpec};
use crate::tensor::Tensor;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"LTCNNCP1";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckpointMetadata {
    pub seed: u64,
    pub epochs_trained: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub byte_offset: usize,
    pub byte_len: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Header {
    format_version: u32,
    spec: NetworkSpec,
    class_names: Vec<String>,
    metadata: CheckpointMetadata,
    tensor_index: Vec<TensorEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub network: Network,
    pub metadata: CheckpointMetadata,
}

/// Names in payload order.
fn tensor_names() -> impl Iterator<Item = &'static str> {
    let p = Network::PARAM_NAMES;
    let b = Network::BUFFER_NAMES;
    [
        p[0], p[1], p[2], p[3], b[0], b[1], p[4], p[5], p[6], p[7], b[2], b[3], p[8], p[9], p[10],
        p[11], p[12], p[13],
    ]
    .into_iter()
}

fn named_tensors(net: &Network) -> HashMap<&'static str, &Tensor> {
    Network::PARAM_NAMES
        .into_iter()
        .zip(net.params())
        .chain(Network::BUFFER_NAMES.into_iter().zip(net.buffers()))
        .collect()
}

fn build_index(net: &Network) -> Vec<TensorEntry> {
    let tensors = named_tensors(net);
    let mut offset = 0;
    tensor_names()
        .map(|name| {
            let t = tensors[name];
            let entry = TensorEntry {
                name: name.to_string(),
                shape: t.shape().to_vec(),
                byte_offset: offset,
                byte_len: 4 * t.len(),
            };
            offset += entry.byte_len;
            entry
        })
        .collect()
}

fn header_for(net: &Network, metadata: &CheckpointMetadata) -> Header {
    Header {
        format_version: FORMAT_VERSION,
        spec: net.spec.clone(),
        class_names: net.spec.class_names.clone(),
        metadata: metadata.clone(),
        tensor_index: build_index(net),
    }
}

/// Bytes before the payload for a freshly built network of this spec.
pub(crate) fn header_size(spec: &NetworkSpec) -> Result<usize> {
    let net = Network::build(spec.clone(), &mut crate::rng::Rng::new(0))?;
    let json = serde_json::to_vec(&header_for(&net, &CheckpointMetadata::default()))
        .map_err(|e| Error::Header(e.to_string()))?;
    Ok(CHECKPOINT_MAGIC.len() + 4 + json.len())
}

impl Checkpoint {
    pub fn new(network: Network, metadata: CheckpointMetadata) -> Self {
        Self { network, metadata }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = header_for(&self.network, &self.metadata);
        let json = serde_json::to_vec(&header).map_err(|e| Error::Header(e.to_string()))?;
        let header_len =
            u32::try_from(json.len()).map_err(|_| Error::Header("header exceeds 4 GiB".into()))?;
        let tensors = named_tensors(&self.network);
        let payload_len: usize = header.tensor_index.iter().map(|e| e.byte_len).sum();
        let mut out = Vec::with_capacity(12 + json.len() + payload_len);
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&header_len.to_le_bytes());
        out.extend_from_slice(&json);
        for entry in &header.tensor_index {
            for v in tensors[entry.name.as_str()].data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 8 || &bytes[..8] != CHECKPOINT_MAGIC {
            return Err(Error::BadMagic {
                expected: "LTCNNCP1",
            });
        }
        if bytes.len() < 12 {
            return Err(Error::Truncated("missing header length".into()));
        }
        let header_len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let payload_start = 12 + header_len;
        if bytes.len() < payload_start {
            return Err(Error::Truncated("header shorter than declared".into()));
        }
        let header: Header = serde_json::from_slice(&bytes[12..payload_start])
            .map_err(|e| Error::Header(e.to_string()))?;
        if header.format_version != FORMAT_VERSION {
            return Err(Error::UnsupportedVersion(header.format_version));
        }
        if header.class_names != header.spec.class_names {
            return Err(Error::Header("class_names disagree with spec".into()));
        }
        let payload = &bytes[payload_start..];

        // Fresh network supplies the expected shapes; the payload overwrites every value.
        let mut net = Network::build(header.spec.clone(), &mut crate::rng::Rng::new(0))?;
        let expected: HashMap<&str, Vec<usize>> = named_tensors(&net)
            .into_iter()
            .map(|(k, t)| (k, t.shape().to_vec()))
            .collect();
        let mut index: HashMap<&str, &TensorEntry> = HashMap::new();
        for entry in &header.tensor_index {
            if !expected.contains_key(entry.name.as_str()) {
                return Err(Error::Header(format!("unknown tensor {:?}", entry.name)));
            }
            if index.insert(entry.name.as_str(), entry).is_some() {
                return Err(Error::Header(format!("duplicate tensor {:?}", entry.name)));
            }
        }

        let load = |name: &'static str, dst: &mut Tensor| -> Result<()> {
            let entry = index
                .get(name)
                .ok_or_else(|| Error::Header(format!("missing tensor {name:?}")))?;
            if entry.shape != expected[name] {
                return Err(Error::CheckpointShape {
                    name: name.into(),
                    expected: expected[name].clone(),
                    found: entry.shape.clone(),
                });
            }
            if entry.byte_len != 4 * dst.len() {
                return Err(Error::Header(format!(
                    "tensor {name:?} declares {} bytes for {} elements",
                    entry.byte_len,
                    dst.len()
                )));
            }
            let end = entry.byte_offset.checked_add(entry.byte_len);
            let raw = end
                .and_then(|end| payload.get(entry.byte_offset..end))
                .ok_or_else(|| {
                    Error::Truncated(format!("tensor {name:?} runs past end of file"))
                })?;
            for (slot, chunk) in dst.data_mut().iter_mut().zip(raw.chunks_exact(4)) {
                *slot = f32::from_le_bytes(chunk.try_into().unwrap());
            }
            Ok(())
        };
        for (name, dst) in Network::PARAM_NAMES.into_iter().zip(net.params_mut()) {
            load(name, dst)?;
        }
        for (name, dst) in Network::BUFFER_NAMES.into_iter().zip(net.buffers_mut()) {
            load(name, dst)?;
        }
        Ok(Self {
            network: net,
            metadata: header.metadata,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

pub fn save_checkpoint(
    net: &Network,
    metadata: &CheckpointMetadata,
    path: impl AsRef<Path>,
) -> Result<()> {
    Checkpoint::new(net.clone(), metadata.clone()).save(path)
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    Checkpoint::load(path)
}

/// Splits a checkpoint into `(json header, payload)`; used by format tooling and tests.
pub fn split_checkpoint(bytes: &[u8]) -> Result<(serde_json::Value, &[u8])> {
    if bytes.len() < 12 || &bytes[..8] != CHECKPOINT_MAGIC {
        return Err(Error::BadMagic {
            expected: "LTCNNCP1",
        });
    }
    let header_len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let header = bytes
        .get(12..12 + header_len)
        .ok_or_else(|| Error::Truncated("header".into()))?;
    let value = serde_json::from_slice(header).map_err(|e| Error::Header(e.to_string()))?;
    Ok((value, &bytes[12 + header_len..]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;
    use crate::tensor::sample_normal;

    fn net() -> Network {
        let spec = NetworkSpec::with_classes(["cat", "dog"]).with_input_size(16, 16);
        Network::build(spec, &mut Rng::new(3)).unwrap()
    }

    fn checkpoint() -> Checkpoint {
        let mut n = net();
        n.bn1.running_mean.data_mut()[2] = 0.75;
        Checkpoint::new(
            n,
            CheckpointMetadata {
                seed: 3,
                epochs_trained: 4,
            },
        )
    }

    #[test]
    fn roundtrip_is_bitwise() {
        let cp = checkpoint();
        let bytes = cp.to_bytes().unwrap();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back, cp);
        assert_eq!(back.to_bytes().unwrap(), bytes);

        let x: Tensor = sample_normal(&mut Rng::new(1), [2, 3, 16, 16], 0.0, 1.0).unwrap();
        let a = cp.network.forward_eval(&x).unwrap().0;
        let b = back.network.forward_eval(&x).unwrap().0;
        assert_eq!(a, b);
    }

    #[test]
    fn file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ltcnn");
        let cp = checkpoint();
        save_checkpoint(&cp.network, &cp.metadata, &path).unwrap();
        assert_eq!(load_checkpoint(&path).unwrap(), cp);
    }

    #[test]
    fn distinct_errors() {
        let bytes = checkpoint().to_bytes().unwrap();

        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(
            Checkpoint::from_bytes(&bad),
            Err(Error::BadMagic { .. })
        ));

        let cut = &bytes[..bytes.len() - 3];
        let err = Checkpoint::from_bytes(cut).unwrap_err();
        assert!(matches!(err, Error::Truncated(_)));
        assert!(err.to_string().contains("truncated payload"));

        let (mut header, payload) = split_checkpoint(&bytes).unwrap();
        header["tensor_index"][0]["shape"] = serde_json::json!([6, 3, 5, 4]);
        let err = Checkpoint::from_bytes(&reassemble(&header, payload)).unwrap_err();
        assert!(matches!(err, Error::CheckpointShape { .. }), "{err}");

        let (mut header, payload) = split_checkpoint(&bytes).unwrap();
        header["format_version"] = serde_json::json!(2);
        let err = Checkpoint::from_bytes(&reassemble(&header, payload)).unwrap_err();
        assert!(matches!(err, Error::UnsupportedVersion(2)));
    }

    fn reassemble(header: &serde_json::Value, payload: &[u8]) -> Vec<u8> {
        let json = serde_json::to_vec(header).unwrap();
        let mut out = CHECKPOINT_MAGIC.to_vec();
        out.extend_from_slice(&(json.len() as u32).to_le_bytes());
        out.extend_from_slice(&json);
        out.extend_from_slice(payload);
        out
    }

    #[test]
    fn permuted_index_loads_identically() {
        // Rewrite the payload in reverse tensor order and reverse the index to match.
        let cp = checkpoint();
        let bytes = cp.to_bytes().unwrap();
        let (mut header, payload) = split_checkpoint(&bytes).unwrap();
        let entries: Vec<TensorEntry> =
            serde_json::from_value(header["tensor_index"].clone()).unwrap();
        let mut new_payload = Vec::new();
        let mut new_entries = Vec::new();
        for e in entries.iter().rev() {
            let chunk = &payload[e.byte_offset..e.byte_offset + e.byte_len];
            new_entries.push(TensorEntry {
                byte_offset: new_payload.len(),
                ..e.clone()
            });
            new_payload.extend_from_slice(chunk);
        }
        new_entries.rotate_left(5);
        header["tensor_index"] = serde_json::to_value(&new_entries).unwrap();
        let back = Checkpoint::from_bytes(&reassemble(&header, &new_payload)).unwrap();
        assert_eq!(back, cp);
    }
}
