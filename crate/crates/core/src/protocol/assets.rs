use std::collections::BTreeMap;

use super::ProtocolError;
use crate::tensor::{Batch, Matrix};

/// Untrusted storage for sealed blobs, addressed by name.
#[derive(Debug, Clone, Default)]
pub struct AssetStore {
    blobs: BTreeMap<String, Vec<u8>>,
}

impl AssetStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn put(&mut self, name: impl Into<String>, blob: Vec<u8>) {
        self.blobs.insert(name.into(), blob);
    }

    pub fn get(&self, name: &str) -> Result<&[u8], ProtocolError> {
        self.blobs
            .get(name)
            .map(Vec::as_slice)
            .ok_or_else(|| ProtocolError::Config(format!("no asset named {name}")))
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Vec<u8>> {
        self.blobs.get_mut(name)
    }
}

/// `rows u64, cols u64, rows*cols f64, rows u64 labels`, all little-endian.
pub fn encode_batch(batch: &Batch) -> Vec<u8> {
    let (rows, cols) = (batch.len(), batch.input_dim());
    let mut out = Vec::with_capacity(16 + rows * cols * 8 + rows * 8);
    out.extend_from_slice(&(rows as u64).to_le_bytes());
    out.extend_from_slice(&(cols as u64).to_le_bytes());
    for x in batch.features().data() {
        out.extend_from_slice(&x.to_le_bytes());
    }
    for &y in batch.labels() {
        out.extend_from_slice(&(y as u64).to_le_bytes());
    }
    out
}

pub fn decode_batch(bytes: &[u8]) -> Result<Batch, ProtocolError> {
    let word = |i: usize| -> Result<[u8; 8], ProtocolError> {
        bytes
            .get(i * 8..i * 8 + 8)
            .map(|b| b.try_into().expect("8 bytes"))
            .ok_or_else(|| ProtocolError::Wire("dataset asset truncated".into()))
    };
    let rows = u64::from_le_bytes(word(0)?) as usize;
    let cols = u64::from_le_bytes(word(1)?) as usize;
    let expected = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_add(rows))
        .and_then(|n| n.checked_add(2))
        .ok_or_else(|| ProtocolError::Wire("dataset asset header overflows".into()))?;
    if bytes.len() != expected * 8 {
        return Err(ProtocolError::Wire(format!(
            "dataset asset is {} bytes, header implies {}",
            bytes.len(),
            expected * 8
        )));
    }
    let features = (0..rows * cols)
        .map(|i| word(2 + i).map(f64::from_le_bytes))
        .collect::<Result<Vec<_>, _>>()?;
    let labels = (0..rows)
        .map(|i| word(2 + rows * cols + i).map(|b| u64::from_le_bytes(b) as usize))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Batch::new(Matrix::from_vec(rows, cols, features)?, labels)?)
}
