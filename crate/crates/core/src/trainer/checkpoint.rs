//! Checkpoint container: magic, little-endian `u32` version and `u64`
//! manifest length, a JSON manifest, then parameters and the two Adam
//! moment buffers as little-endian `f64`.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Adam, TrainConfig};
use crate::encoders::{Model, ModelConfig, ModelError, TensorSpec};
use crate::linearize::Vocabulary;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"CQACKPT\0";
pub const CHECKPOINT_VERSION: u32 = 1;
const MAX_MANIFEST: u64 = 16 << 20;

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub model: Model,
    pub config: TrainConfig,
    pub adam: Adam,
    /// Completed epochs.
    pub epoch: usize,
}

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a checkpoint (bad magic)")]
    Magic,
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error("malformed manifest: {0}")]
    Manifest(String),
    #[error("vocabulary layout {found} does not match {expected}")]
    VocabMismatch { expected: String, found: String },
    #[error("tensor layout does not match the model configuration")]
    Layout,
    #[error("expected {expected} bytes of tensor data, found {found}")]
    Data { expected: u64, found: u64 },
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    model: ModelConfig,
    vocab: Vocabulary,
    vocab_hash: String,
    train_config: String,
    epoch: usize,
    adam_step: u64,
    params: usize,
    tensors: Vec<TensorSpec>,
}

fn put_f64s(w: &mut impl Write, xs: &[f64]) -> std::io::Result<()> {
    let mut buf = Vec::with_capacity(xs.len() * 8);
    for x in xs {
        buf.extend_from_slice(&x.to_le_bytes());
    }
    w.write_all(&buf)
}

pub fn write_checkpoint(mut w: impl Write, c: &Checkpoint) -> Result<(), CheckpointError> {
    let m = &c.model;
    let manifest = Manifest {
        model: m.config().clone(),
        vocab: *m.vocab(),
        vocab_hash: m.vocab().layout_hash(),
        train_config: c.config.to_text(),
        epoch: c.epoch,
        adam_step: c.adam.step,
        params: m.num_params(),
        tensors: m.layout().specs().to_vec(),
    };
    let json = serde_json::to_vec(&manifest).expect("manifest serializes");
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    w.write_all(&(json.len() as u64).to_le_bytes())?;
    w.write_all(&json)?;
    put_f64s(&mut w, m.params())?;
    put_f64s(&mut w, &c.adam.m)?;
    put_f64s(&mut w, &c.adam.v)?;
    w.flush()?;
    Ok(())
}

/// Reads a checkpoint. With `expected` set, refuses a checkpoint built for
/// a different vocabulary layout.
pub fn read_checkpoint(mut r: impl Read, expected: Option<&Vocabulary>) -> Result<Checkpoint, CheckpointError> {
    let mut head = [0u8; 20];
    r.read_exact(&mut head).map_err(|_| CheckpointError::Magic)?;
    if &head[..8] != CHECKPOINT_MAGIC {
        return Err(CheckpointError::Magic);
    }
    let version = u32::from_le_bytes(head[8..12].try_into().expect("4 bytes"));
    if version != CHECKPOINT_VERSION {
        return Err(CheckpointError::Version(version));
    }
    let mlen = u64::from_le_bytes(head[12..20].try_into().expect("8 bytes"));
    if mlen > MAX_MANIFEST {
        return Err(CheckpointError::Manifest(format!("manifest of {mlen} bytes")));
    }
    let mut json = Vec::new();
    (&mut r).take(mlen).read_to_end(&mut json)?;
    if json.len() as u64 != mlen {
        return Err(CheckpointError::Manifest("truncated".into()));
    }
    let man: Manifest = serde_json::from_slice(&json).map_err(|e| CheckpointError::Manifest(e.to_string()))?;
    if man.vocab.layout_hash() != man.vocab_hash {
        return Err(CheckpointError::Manifest("vocabulary hash does not match its counts".into()));
    }
    if let Some(v) = expected {
        if v.layout_hash() != man.vocab_hash {
            return Err(CheckpointError::VocabMismatch { expected: v.layout_hash(), found: man.vocab_hash });
        }
    }
    let config = TrainConfig::parse(&man.train_config).map_err(|e| CheckpointError::Manifest(e.to_string()))?;
    if config.model != man.model {
        return Err(CheckpointError::Manifest("model section disagrees with the training configuration".into()));
    }
    let n = Model::param_count(&man.model, &man.vocab)?;
    if n != man.params {
        return Err(CheckpointError::Layout);
    }
    let expected_bytes = 3 * 8 * n as u64;
    let mut data = Vec::new();
    (&mut r).take(expected_bytes + 1).read_to_end(&mut data)?;
    if data.len() as u64 != expected_bytes {
        return Err(CheckpointError::Data { expected: expected_bytes, found: data.len() as u64 });
    }
    let mut vals = data.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")));
    let params: Vec<f64> = vals.by_ref().take(n).collect();
    let m: Vec<f64> = vals.by_ref().take(n).collect();
    let v: Vec<f64> = vals.collect();
    let model = Model::from_params(man.model, man.vocab, params)?;
    if model.layout().specs() != man.tensors.as_slice() {
        return Err(CheckpointError::Layout);
    }
    Ok(Checkpoint { model, config, adam: Adam { m, v, step: man.adam_step }, epoch: man.epoch })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoders::Architecture;

    fn ckpt() -> Checkpoint {
        let config = TrainConfig {
            model: ModelConfig { dim: 4, layers: 1, ..ModelConfig::desk(Architecture::TreeLstm) },
            ..TrainConfig::default()
        };
        let model = Model::new(config.model.clone(), Vocabulary::new(5, 2), 1).unwrap();
        let mut adam = Adam::new(model.num_params());
        adam.m[3] = 0.25;
        adam.step = 7;
        Checkpoint { model, config, adam, epoch: 2 }
    }

    fn bytes(c: &Checkpoint) -> Vec<u8> {
        let mut b = Vec::new();
        write_checkpoint(&mut b, c).unwrap();
        b
    }

    #[test]
    fn round_trip() {
        let c = ckpt();
        let b = bytes(&c);
        let back = read_checkpoint(&b[..], Some(&Vocabulary::new(5, 2))).unwrap();
        assert_eq!(back.model.params(), c.model.params());
        assert_eq!(back.adam, c.adam);
        assert_eq!(back.config, c.config);
        assert_eq!(back.epoch, 2);
        assert_eq!(bytes(&back), b);
    }

    #[test]
    fn refuses_other_vocabulary_and_damage() {
        let b = bytes(&ckpt());
        assert!(matches!(
            read_checkpoint(&b[..], Some(&Vocabulary::new(6, 2))),
            Err(CheckpointError::VocabMismatch { .. })
        ));
        assert!(matches!(read_checkpoint(&b[..b.len() - 1], None), Err(CheckpointError::Data { .. })));
        let mut extra = b.clone();
        extra.push(0);
        assert!(matches!(read_checkpoint(&extra[..], None), Err(CheckpointError::Data { .. })));
        let mut bad = b.clone();
        bad[0] = b'X';
        assert!(matches!(read_checkpoint(&bad[..], None), Err(CheckpointError::Magic)));
        let mut ver = b;
        ver[8] = 9;
        assert!(matches!(read_checkpoint(&ver[..], None), Err(CheckpointError::Version(9))));
    }
}
