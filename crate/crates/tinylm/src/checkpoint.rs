//! Binary checkpoint container.
//!
//! Layout: the magic bytes `TLMCKPT\0`, a little-endian `u32` format version,
//! a `u64` header length, a JSON header, then the raw little-endian parameter
//! buffer followed by the optional AdamW first and second moments.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{ModelError, Scalar, TinyLmConfig, TinyLmParams, TrainConfig};

const MAGIC: &[u8; 8] = b"TLMCKPT\0";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint<F: Scalar> {
    pub params: TinyLmParams<F>,
    pub seed: u64,
    pub step: u64,
    pub tokens_seen: u64,
    pub train_config: Option<TrainConfig>,
    pub optimizer: Option<(Vec<F>, Vec<F>)>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    config: TinyLmConfig,
    seed: u64,
    step: u64,
    tokens_seen: u64,
    train_config: Option<TrainConfig>,
    dtype: String,
    n_params: usize,
    has_optimizer: bool,
}

impl<F: Scalar> Checkpoint<F> {
    pub fn new(params: TinyLmParams<F>, seed: u64) -> Self {
        Self {
            params,
            seed,
            step: 0,
            tokens_seen: 0,
            train_config: None,
            optimizer: None,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = Header {
            config: self.params.config().clone(),
            seed: self.seed,
            step: self.step,
            tokens_seen: self.tokens_seen,
            train_config: self.train_config.clone(),
            dtype: F::DTYPE.to_string(),
            n_params: self.params.len(),
            has_optimizer: self.optimizer.is_some(),
        };
        let header = serde_json::to_vec(&header).expect("header serializes");
        let tensors = if self.optimizer.is_some() { 3 } else { 1 };
        let mut out = Vec::with_capacity(20 + header.len() + tensors * self.params.len() * F::BYTES);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        for &x in self.params.as_slice() {
            x.write_le(&mut out);
        }
        if let Some((m, v)) = &self.optimizer {
            for &x in m.iter().chain(v) {
                x.write_le(&mut out);
            }
        }
        out
    }

    /// Parses a checkpoint, converting from the stored precision if needed.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ModelError> {
        let bad = |msg: &str| ModelError::Checkpoint(msg.to_string());
        if bytes.len() < 20 || &bytes[..8] != MAGIC {
            return Err(bad("not a tinylm checkpoint"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if version != VERSION {
            return Err(ModelError::Checkpoint(format!("unsupported version {version}")));
        }
        let hlen = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
        let body = bytes.get(20..).ok_or_else(|| bad("truncated"))?;
        let header: Header = serde_json::from_slice(body.get(..hlen).ok_or_else(|| bad("truncated header"))?)
            .map_err(|e| ModelError::Checkpoint(e.to_string()))?;
        let data = &body[hlen..];
        match header.dtype.as_str() {
            "f32" => Self::decode::<f32>(header, data),
            "f64" => Self::decode::<f64>(header, data),
            other => Err(ModelError::Checkpoint(format!("unknown dtype {other}"))),
        }
    }

    fn decode<S: Scalar>(header: Header, data: &[u8]) -> Result<Self, ModelError> {
        let n = header.n_params;
        let tensors = if header.has_optimizer { 3 } else { 1 };
        if data.len() != tensors * n * S::BYTES {
            return Err(ModelError::Checkpoint(format!(
                "expected {} payload bytes, found {}",
                tensors * n * S::BYTES,
                data.len()
            )));
        }
        let mut values = data.chunks_exact(S::BYTES).map(|c| F::lit(S::read_le(c).as_f64()));
        let params: Vec<F> = values.by_ref().take(n).collect();
        let optimizer = header.has_optimizer.then(|| {
            let m: Vec<F> = values.by_ref().take(n).collect();
            let v: Vec<F> = values.by_ref().take(n).collect();
            (m, v)
        });
        Ok(Self {
            params: TinyLmParams::from_vec(&header.config, params)?,
            seed: header.seed,
            step: header.step,
            tokens_seen: header.tokens_seen,
            train_config: header.train_config,
            optimizer,
        })
    }
}

pub fn save_checkpoint<F: Scalar>(path: &Path, ckpt: &Checkpoint<F>) -> Result<(), ModelError> {
    std::fs::write(path, ckpt.to_bytes())?;
    Ok(())
}

pub fn load_checkpoint<F: Scalar>(path: &Path) -> Result<Checkpoint<F>, ModelError> {
    Checkpoint::from_bytes(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::init_params;

    #[test]
    fn round_trip_with_optimizer_state() {
        let cfg = TinyLmConfig::new(11, 8, 1, 2, 6);
        let params: TinyLmParams<f32> = init_params(&cfg, 4).unwrap();
        let n = params.len();
        let ckpt = Checkpoint {
            params,
            seed: 4,
            step: 17,
            tokens_seen: 900,
            train_config: Some(TrainConfig::reference()),
            optimizer: Some((vec![0.5; n], vec![0.25; n])),
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        save_checkpoint(&path, &ckpt).unwrap();
        let back: Checkpoint<f32> = load_checkpoint(&path).unwrap();
        assert_eq!(back, ckpt);
        let wide: Checkpoint<f64> = load_checkpoint(&path).unwrap();
        assert_eq!(wide.params.as_slice()[3], ckpt.params.as_slice()[3] as f64);
    }

    #[test]
    fn rejects_garbage_and_truncation() {
        assert!(Checkpoint::<f32>::from_bytes(b"hello world, not a model").is_err());
        let cfg = TinyLmConfig::new(11, 8, 1, 2, 6);
        let bytes = Checkpoint::new(init_params::<f32>(&cfg, 0).unwrap(), 0).to_bytes();
        assert!(Checkpoint::<f32>::from_bytes(&bytes[..bytes.len() - 1]).is_err());
    }
}
