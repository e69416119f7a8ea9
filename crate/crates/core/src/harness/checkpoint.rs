//! Binary checkpoints of a training state.
//!
//! Layout:
//!
//! ```text
//! magic    8 bytes   "RLORACKP"
//! version  u32 LE
//! hlen     u64 LE    length of the JSON header in bytes
//! header   hlen bytes, UTF-8 JSON (shapes, dtype tag, step, config digest)
//! payload  f64 LE values of every tensor listed in the header, in order
//! ```
//!
//! Per layer the tensors are `w0, a, b, mask_a, mask_b, ema_a, ema_b`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::adapter::LoraAdapter;
use crate::model::LoraMlp;
use crate::sensitivity::SensitivityState;
use crate::tensor::Matrix;
use crate::trainer::TrainState;

pub const MAGIC: &[u8; 8] = b"RLORACKP";
pub const FORMAT_VERSION: u32 = 1;
const DTYPE: &str = "f64-le";
const PREAMBLE: usize = 8 + 4 + 8;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("corrupt checkpoint header: {0}")]
    CorruptHeader(String),
    #[error("checkpoint version {found} not supported (reader expects {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("corrupt checkpoint payload: {0}")]
    CorruptPayload(String),
    #[error("inconsistent checkpoint shapes: {0}")]
    ShapeInconsistency(String),
}

impl CheckpointError {
    /// Stable identifier for each failure kind.
    pub fn code(&self) -> &'static str {
        match self {
            CheckpointError::Io(_) => "io",
            CheckpointError::CorruptHeader(_) => "corrupt-header",
            CheckpointError::VersionMismatch { .. } => "version-mismatch",
            CheckpointError::CorruptPayload(_) => "corrupt-payload",
            CheckpointError::ShapeInconsistency(_) => "shape-inconsistency",
        }
    }
}

type CkResult<T> = std::result::Result<T, CheckpointError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerHeader {
    pub d1: usize,
    pub d2: usize,
    pub rank: usize,
    pub beta: f64,
    pub steps_seen: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format_version: u32,
    pub dtype: String,
    pub step: usize,
    pub config_digest: String,
    pub layers: Vec<LayerHeader>,
    pub tensors: Vec<TensorEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub state: TrainState,
}

/// Hex SHA-256 of the JSON serialisation of `config`.
pub fn config_digest<T: Serialize>(config: &T) -> String {
    let json = serde_json::to_vec(config).expect("config serialises to JSON");
    Sha256::digest(&json).iter().map(|b| format!("{b:02x}")).collect()
}

fn layer_tensors(l: usize, layer: &LoraAdapter, scores: &SensitivityState) -> [(String, Matrix); 7] {
    [
        (format!("layer{l}.w0"), layer.w0().clone()),
        (format!("layer{l}.a"), layer.a().clone()),
        (format!("layer{l}.b"), layer.b().clone()),
        (format!("layer{l}.mask_a"), layer.mask_a().clone()),
        (format!("layer{l}.mask_b"), layer.mask_b().clone()),
        (format!("layer{l}.ema_a"), scores.ema_a().clone()),
        (format!("layer{l}.ema_b"), scores.ema_b().clone()),
    ]
}

impl Checkpoint {
    pub fn new(state: TrainState, config_digest: impl Into<String>) -> Self {
        let mut layers = Vec::new();
        let mut tensors = Vec::new();
        for (l, (layer, scores)) in state.model.layers().iter().zip(&state.sensitivity).enumerate() {
            let (d1, d2) = layer.dims();
            layers.push(LayerHeader {
                d1,
                d2,
                rank: layer.rank(),
                beta: scores.beta(),
                steps_seen: scores.steps_seen(),
            });
            for (name, m) in layer_tensors(l, layer, scores) {
                tensors.push(TensorEntry {
                    name,
                    rows: m.rows(),
                    cols: m.cols(),
                });
            }
        }
        Self {
            header: CheckpointHeader {
                format_version: FORMAT_VERSION,
                dtype: DTYPE.to_owned(),
                step: state.step,
                config_digest: config_digest.into(),
                layers,
                tensors,
            },
            state,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = serde_json::to_vec(&self.header).expect("header serialises to JSON");
        let mut out = Vec::with_capacity(PREAMBLE + header.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&self.header.format_version.to_le_bytes());
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        for (l, (layer, scores)) in self
            .state
            .model
            .layers()
            .iter()
            .zip(&self.state.sensitivity)
            .enumerate()
        {
            for (_, m) in layer_tensors(l, layer, scores) {
                for v in m.data() {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> CkResult<Self> {
        Self::from_bytes_with_reader(bytes, FORMAT_VERSION)
    }

    /// Parses `bytes` as a reader that only understands `reader_version`.
    pub fn from_bytes_with_reader(bytes: &[u8], reader_version: u32) -> CkResult<Self> {
        if bytes.len() < PREAMBLE || &bytes[..8] != MAGIC {
            return Err(CheckpointError::CorruptHeader("missing magic bytes".into()));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
        if version != reader_version {
            return Err(CheckpointError::VersionMismatch {
                found: version,
                expected: reader_version,
            });
        }
        let hlen = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
        let header_end = PREAMBLE
            .checked_add(hlen)
            .filter(|end| *end <= bytes.len())
            .ok_or_else(|| CheckpointError::CorruptHeader("header runs past end of file".into()))?;
        let header: CheckpointHeader = serde_json::from_slice(&bytes[PREAMBLE..header_end])
            .map_err(|e| CheckpointError::CorruptHeader(e.to_string()))?;
        if header.format_version != version {
            return Err(CheckpointError::CorruptHeader(format!(
                "header declares version {} but preamble says {version}",
                header.format_version
            )));
        }
        if header.dtype != DTYPE {
            return Err(CheckpointError::CorruptHeader(format!(
                "unknown dtype {}",
                header.dtype
            )));
        }

        let expected_values: usize = header.tensors.iter().map(|t| t.rows * t.cols).sum();
        let payload = &bytes[header_end..];
        if payload.len() != expected_values * 8 {
            return Err(CheckpointError::CorruptPayload(format!(
                "expected {} payload bytes, found {}",
                expected_values * 8,
                payload.len()
            )));
        }
        if header.tensors.len() != header.layers.len() * 7 {
            return Err(CheckpointError::ShapeInconsistency(format!(
                "{} tensors listed for {} layers",
                header.tensors.len(),
                header.layers.len()
            )));
        }

        let mut values = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));
        let mut matrices = Vec::with_capacity(header.tensors.len());
        for t in &header.tensors {
            let data: Vec<f64> = values.by_ref().take(t.rows * t.cols).collect();
            let m = Matrix::new(t.rows, t.cols, data)
                .map_err(|e| CheckpointError::ShapeInconsistency(format!("{}: {e}", t.name)))?;
            matrices.push(m);
        }

        let mut layers = Vec::with_capacity(header.layers.len());
        let mut scores = Vec::with_capacity(header.layers.len());
        let mut it = matrices.into_iter();
        for (l, lh) in header.layers.iter().enumerate() {
            let mut next = || it.next().expect("seven tensors per layer");
            let (w0, a, b, mask_a, mask_b, ema_a, ema_b) = (next(), next(), next(), next(), next(), next(), next());
            let shapes_ok = w0.shape() == (lh.d1, lh.d2)
                && a.shape() == (lh.rank, lh.d2)
                && b.shape() == (lh.d1, lh.rank)
                && ema_a.shape() == a.shape()
                && ema_b.shape() == b.shape();
            if !shapes_ok {
                return Err(CheckpointError::ShapeInconsistency(format!(
                    "layer {l} tensors disagree with declared {}x{} rank {}",
                    lh.d1, lh.d2, lh.rank
                )));
            }
            let adapter = LoraAdapter::from_parts(w0, a.clone(), b.clone(), mask_a, mask_b)
                .map_err(|e| CheckpointError::ShapeInconsistency(format!("layer {l}: {e}")))?;
            if !adapter.a().bit_eq(&a) || !adapter.b().bit_eq(&b) {
                return Err(CheckpointError::CorruptPayload(format!(
                    "layer {l} has nonzero entries outside its masks"
                )));
            }
            let st = SensitivityState::from_parts(ema_a, ema_b, lh.beta, lh.steps_seen)
                .map_err(|e| CheckpointError::CorruptPayload(format!("layer {l}: {e}")))?;
            layers.push(adapter);
            scores.push(st);
        }
        let model = LoraMlp::from_layers(layers).map_err(|e| CheckpointError::ShapeInconsistency(e.to_string()))?;
        Ok(Self {
            state: TrainState {
                model,
                sensitivity: scores,
                step: header.step,
            },
            header,
        })
    }
}

pub fn save_checkpoint(path: impl AsRef<Path>, state: &TrainState, config_digest: &str) -> CkResult<()> {
    let ck = Checkpoint::new(state.clone(), config_digest);
    fs::write(path, ck.to_bytes())?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> CkResult<Checkpoint> {
    Checkpoint::from_bytes(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Mlp;
    use crate::pruner::SparsitySchedule;
    use crate::trainer::{train, TrainConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn trained_state() -> TrainState {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let base = Mlp::random(&[5, 7, 3], &mut rng).unwrap();
        let x = Matrix::uniform(5, 12, -1.0, 1.0, &mut rng);
        let y: Vec<usize> = (0..12).map(|i| i % 3).collect();
        let cfg = TrainConfig {
            learning_rate: 0.3,
            schedule: SparsitySchedule::new(0.4, 2, 6, 8).unwrap(),
            beta: 0.8,
            edit_alpha: Some(0.5),
            batch_size: 4,
            seed: 1,
        };
        train(LoraMlp::from_base(&base, 2, 3).unwrap(), &x, &y, &cfg)
            .unwrap()
            .state
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let state = trained_state();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.ckpt");
        save_checkpoint(&path, &state, "abc").unwrap();
        let loaded = load_checkpoint(&path).unwrap();
        assert_eq!(loaded.header.config_digest, "abc");
        assert_eq!(loaded.header.step, 8);
        for (x, y) in state.model.layers().iter().zip(loaded.state.model.layers()) {
            for (m, n) in [
                (x.w0(), y.w0()),
                (x.a(), y.a()),
                (x.b(), y.b()),
                (x.mask_a(), y.mask_a()),
            ] {
                assert!(m.bit_eq(n));
            }
        }
        assert_eq!(loaded.state, state);
        assert_eq!(Checkpoint::new(state, "abc").to_bytes(), fs::read(&path).unwrap());
    }

    #[test]
    fn truncated_payload() {
        let bytes = Checkpoint::new(trained_state(), "d").to_bytes();
        let err = Checkpoint::from_bytes(&bytes[..bytes.len() - 3]).unwrap_err();
        assert_eq!(err.code(), "corrupt-payload");
    }

    #[test]
    fn truncated_header() {
        let bytes = Checkpoint::new(trained_state(), "d").to_bytes();
        let err = Checkpoint::from_bytes(&bytes[..40]).unwrap_err();
        assert_eq!(err.code(), "corrupt-header");
        let mut garbled = bytes.clone();
        garbled[0] = b'X';
        assert_eq!(Checkpoint::from_bytes(&garbled).unwrap_err().code(), "corrupt-header");
    }

    #[test]
    fn version_is_checked() {
        let bytes = Checkpoint::new(trained_state(), "d").to_bytes();
        let err = Checkpoint::from_bytes_with_reader(&bytes, 2).unwrap_err();
        assert!(matches!(
            err,
            CheckpointError::VersionMismatch { found: 1, expected: 2 }
        ));
        assert_eq!(err.code(), "version-mismatch");
    }

    #[test]
    fn inconsistent_shapes() {
        let mut ck = Checkpoint::new(trained_state(), "d");
        ck.header.layers[0].rank = 3;
        let err = Checkpoint::from_bytes(&ck.to_bytes()).unwrap_err();
        assert_eq!(err.code(), "shape-inconsistency");
    }

    #[test]
    fn digest_is_stable() {
        let d1 = config_digest(&("x", 1));
        assert_eq!(d1, config_digest(&("x", 1)));
        assert_ne!(d1, config_digest(&("x", 2)));
        assert_eq!(d1.len(), 64);
    }
}
