//! Model persistence.
//!
//! Layout of a checkpoint file:
//!
//! ```text
//! offset  size  content
//! 0       8     magic "STYLEKIT"
//! 8       4     format version, u32 little-endian
//! 12      8     header length H, u64 little-endian
//! 20      H     UTF-8 JSON header (kind, architecture, provenance, tensor table, payload SHA-256)
//! 20+H    ...   payload: every tensor in table order as little-endian f64
//! ```
//!
//! The tensor table lists parameters first, then running buffers, each with
//! its name and shape. Loading rebuilds the model from the stored
//! architecture and refuses anything that does not match exactly.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::models::{ArchConfig, Trainable};

const MAGIC: &[u8; 8] = b"STYLEKIT";
pub const FORMAT_VERSION: u32 = 1;

/// How a set of weights came to be.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    /// `init`, `pretrain`, `finetune`, ...
    pub stage: String,
    pub seed: u64,
    pub epochs_run: usize,
    /// Epoch whose weights were kept, when selection was by validation loss.
    pub selected_epoch: Option<usize>,
    pub train_loss: Option<f64>,
    pub val_loss: Option<f64>,
    /// Provenance of the weights this stage started from.
    pub parent: Option<Box<Provenance>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    buffer: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct Header {
    kind: String,
    arch: ArchConfig,
    provenance: Provenance,
    tensors: Vec<TensorEntry>,
    payload_sha256: String,
}

/// Everything in a checkpoint except the weights.
#[derive(Clone, Debug, PartialEq)]
pub struct CheckpointInfo {
    pub kind: String,
    pub arch: ArchConfig,
    pub provenance: Provenance,
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn to_bytes<M: Trainable>(model: &M, provenance: &Provenance) -> Result<Vec<u8>> {
    let store = model.store();
    let mut tensors = Vec::new();
    let mut payload = Vec::with_capacity(8 * (store.num_weights() + 1024));
    let entries = store.params().map(|e| (false, e)).chain(store.buffers().map(|e| (true, e)));
    for (buffer, (name, t)) in entries {
        tensors.push(TensorEntry { name: name.to_string(), shape: t.shape().to_vec(), buffer });
        for v in t.data() {
            payload.extend_from_slice(&v.to_le_bytes());
        }
    }
    let header = Header {
        kind: M::KIND.to_string(),
        arch: model.arch().clone(),
        provenance: provenance.clone(),
        tensors,
        payload_sha256: hex(&Sha256::digest(&payload)),
    };
    let json = serde_json::to_vec(&header)?;
    let mut out = Vec::with_capacity(20 + json.len() + payload.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&payload);
    Ok(out)
}

/// Writes atomically: a sibling temporary file is renamed into place.
pub fn save_checkpoint<M: Trainable>(model: &M, provenance: &Provenance, path: &Path) -> Result<()> {
    let bytes = to_bytes(model, provenance)?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let tmp = path.with_extension("partial");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

fn parse_header(bytes: &[u8]) -> Result<(Header, &[u8])> {
    let bad = |m: String| Error::Checkpoint(m);
    if bytes.len() < 20 || &bytes[..8] != MAGIC {
        return Err(bad("not a checkpoint file (bad magic)".into()));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != FORMAT_VERSION {
        return Err(bad(format!("format version {version}, this build reads {FORMAT_VERSION}")));
    }
    let len = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes"));
    let end = usize::try_from(len)
        .ok()
        .and_then(|l| l.checked_add(20))
        .filter(|&e| e <= bytes.len())
        .ok_or_else(|| bad(format!("header length {len} exceeds file size {}", bytes.len())))?;
    let header: Header =
        serde_json::from_slice(&bytes[20..end]).map_err(|e| bad(format!("unreadable header: {e}")))?;
    Ok((header, &bytes[end..]))
}

pub fn read_info(path: &Path) -> Result<CheckpointInfo> {
    let bytes = fs::read(path)?;
    let (h, _) = parse_header(&bytes)?;
    Ok(CheckpointInfo { kind: h.kind, arch: h.arch, provenance: h.provenance })
}

/// Rebuilds a model. With `expected`, a differing architecture is rejected.
pub fn from_bytes<M: Trainable>(bytes: &[u8], expected: Option<&ArchConfig>) -> Result<(M, Provenance)> {
    let (header, payload) = parse_header(bytes)?;
    if header.kind != M::KIND {
        return Err(Error::Checkpoint(format!("checkpoint holds a {} model, expected {}", header.kind, M::KIND)));
    }
    if let Some(want) = expected {
        if *want != header.arch {
            return Err(Error::Checkpoint(format!(
                "architecture mismatch: checkpoint has {:?}, run expects {:?}",
                header.arch, want
            )));
        }
    }
    let numel: usize = header.tensors.iter().map(|t| t.shape.iter().product::<usize>()).sum();
    if payload.len() != numel * 8 {
        return Err(Error::Checkpoint(format!(
            "payload is {} bytes, tensor table needs {}",
            payload.len(),
            numel * 8
        )));
    }
    if hex(&Sha256::digest(payload)) != header.payload_sha256 {
        return Err(Error::Checkpoint("payload checksum mismatch".into()));
    }

    let mut model = M::build(&header.arch, 0)?;
    let mut offset = 0;
    let mut table = header.tensors.iter();
    for (buffer, name, t) in model.store_mut().entries_mut() {
        let entry = table
            .next()
            .ok_or_else(|| Error::Checkpoint(format!("tensor {name} missing from checkpoint")))?;
        if entry.name != name || entry.buffer != buffer || entry.shape != t.shape() {
            return Err(Error::Checkpoint(format!(
                "tensor table mismatch at {name} {:?}: checkpoint has {} {:?}",
                t.shape(),
                entry.name,
                entry.shape
            )));
        }
        for v in t.data_mut() {
            *v = f64::from_le_bytes(payload[offset..offset + 8].try_into().expect("8 bytes"));
            offset += 8;
        }
    }
    if let Some(extra) = table.next() {
        return Err(Error::Checkpoint(format!("unexpected tensor {} in checkpoint", extra.name)));
    }
    Ok((model, header.provenance))
}

pub fn load_checkpoint<M: Trainable>(path: &Path, expected: Option<&ArchConfig>) -> Result<(M, Provenance)> {
    let bytes = fs::read(path).map_err(|e| Error::Input { path: path.to_path_buf(), message: e.to_string() })?;
    from_bytes(&bytes, expected)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::ImageTensor;
    use crate::models::{CnnBaseline, JuxtapositionNetwork};
    use crate::tensor::Tensor;

    fn image(seed: u64) -> ImageTensor {
        ImageTensor::from_tensor(Tensor::from_fn([3, 32, 32], |i| ((i as u64 * 31 + seed) % 17) as f64 / 8.0 - 1.0))
            .unwrap()
    }

    fn provenance() -> Provenance {
        Provenance { stage: "pretrain".into(), seed: 3, epochs_run: 2, ..Default::default() }
    }

    #[test]
    fn round_trip_preserves_scores_exactly() {
        let mut net = JuxtapositionNetwork::new(&ArchConfig::tiny(), 11).unwrap();
        // make buffers non-trivial
        let id = net.store().id_of("embed.block1.bn.gamma").unwrap();
        net.store_mut().param_mut(id).data_mut()[0] = 1.7;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        save_checkpoint(&net, &provenance(), &path).unwrap();
        let (back, prov): (JuxtapositionNetwork, _) = load_checkpoint(&path, Some(&ArchConfig::tiny())).unwrap();
        assert_eq!(prov, provenance());
        assert_eq!(back.store(), net.store());
        let (a, b) = (image(1), image(2));
        assert_eq!(back.embed(&a).unwrap(), net.embed(&a).unwrap());
        assert_eq!(back.match_score(&a, &b).unwrap(), net.match_score(&a, &b).unwrap());
        assert_eq!(read_info(&path).unwrap().kind, "juxtaposition");
    }

    #[test]
    fn truncation_and_corruption_rejected() {
        let net = JuxtapositionNetwork::new(&ArchConfig::tiny(), 1).unwrap();
        let bytes = to_bytes(&net, &provenance()).unwrap();
        for cut in [0, 7, 19, 40, bytes.len() - 1] {
            let r = from_bytes::<JuxtapositionNetwork>(&bytes[..cut], None);
            assert!(matches!(r, Err(Error::Checkpoint(_))), "cut at {cut}");
        }
        let mut flipped = bytes.clone();
        let last = flipped.len() - 3;
        flipped[last] ^= 0x40;
        assert!(matches!(from_bytes::<JuxtapositionNetwork>(&flipped, None), Err(Error::Checkpoint(_))));
        let mut version = bytes.clone();
        version[8] = 9;
        assert!(matches!(from_bytes::<JuxtapositionNetwork>(&version, None), Err(Error::Checkpoint(_))));
    }

    #[test]
    fn architecture_and_kind_mismatches_rejected() {
        let net = JuxtapositionNetwork::new(&ArchConfig::tiny(), 1).unwrap();
        let bytes = to_bytes(&net, &provenance()).unwrap();
        let wider = ArchConfig { channels: vec![2, 3, 3, 4, 8], ..ArchConfig::tiny() };
        match from_bytes::<JuxtapositionNetwork>(&bytes, Some(&wider)) {
            Err(Error::Checkpoint(m)) => assert!(m.contains("[2, 3, 3, 4, 4]") && m.contains("[2, 3, 3, 4, 8]")),
            other => panic!("{other:?}"),
        }
        assert!(from_bytes::<CnnBaseline>(&bytes, None).is_err());
    }

    #[test]
    fn identical_models_serialise_identically() {
        let a = to_bytes(&JuxtapositionNetwork::new(&ArchConfig::tiny(), 5).unwrap(), &provenance()).unwrap();
        let b = to_bytes(&JuxtapositionNetwork::new(&ArchConfig::tiny(), 5).unwrap(), &provenance()).unwrap();
        assert_eq!(a, b);
        let c = to_bytes(&JuxtapositionNetwork::new(&ArchConfig::tiny(), 6).unwrap(), &provenance()).unwrap();
        assert_ne!(a, c);
    }
}
