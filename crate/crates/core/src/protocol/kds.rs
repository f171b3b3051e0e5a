//! Key distribution service.
//!
//! Owners register a key together with the measurement of the component that
//! may receive it. A key is handed out at most once, to a caller presenting
//! exactly that measurement, and the stored copy is wiped on release.

use std::collections::BTreeMap;

use sha2::{Digest, Sha256};

use super::crypto::SymmetricKey;
use super::{ProtocolError, SessionConfig};

/// Version string folded into every measurement.
pub const CODE_VERSION: &str = concat!("dpbarrier/", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ComponentKind {
    Admin,
    ModelUpdater,
    DataHandler,
}

impl ComponentKind {
    pub fn label(self) -> &'static str {
        match self {
            ComponentKind::Admin => "admin",
            ComponentKind::ModelUpdater => "model_updater",
            ComponentKind::DataHandler => "data_handler",
        }
    }
}

/// SHA-256 over (component kind, code version, canonical config).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Measurement(pub [u8; 32]);

impl Measurement {
    pub fn to_hex(&self) -> String {
        self.0.iter().map(|b| format!("{b:02x}")).collect()
    }
}

fn absorb(hasher: &mut Sha256, field: &[u8]) {
    hasher.update((field.len() as u64).to_le_bytes());
    hasher.update(field);
}

pub fn attest(kind: ComponentKind, code_version: &str, config: &SessionConfig) -> Measurement {
    let mut hasher = Sha256::new();
    absorb(&mut hasher, kind.label().as_bytes());
    absorb(&mut hasher, code_version.as_bytes());
    absorb(&mut hasher, &config.canonical_bytes());
    Measurement(hasher.finalize().into())
}

#[derive(Debug)]
pub struct KeyRecord {
    pub key_id: String,
    key: Option<SymmetricKey>,
    pub expected_measurement: Measurement,
    pub session_id: String,
    released: bool,
}

impl KeyRecord {
    pub fn new(
        key_id: impl Into<String>,
        key: SymmetricKey,
        expected_measurement: Measurement,
        session_id: impl Into<String>,
    ) -> Self {
        Self {
            key_id: key_id.into(),
            key: Some(key),
            expected_measurement,
            session_id: session_id.into(),
            released: false,
        }
    }

    pub fn released(&self) -> bool {
        self.released
    }

    pub fn key_erased(&self) -> bool {
        self.key.is_none()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Denial {
    UnknownKey,
    MeasurementMismatch,
    AlreadyReleased,
}

impl std::fmt::Display for Denial {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Denial::UnknownKey => "unknown_key",
            Denial::MeasurementMismatch => "measurement_mismatch",
            Denial::AlreadyReleased => "already_released",
        })
    }
}

#[derive(Debug, Default)]
pub struct Kds {
    records: BTreeMap<String, KeyRecord>,
}

impl Kds {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, record: KeyRecord) -> Result<String, ProtocolError> {
        if self.records.contains_key(&record.key_id) {
            return Err(ProtocolError::DuplicateKey(record.key_id));
        }
        let id = record.key_id.clone();
        self.records.insert(id.clone(), record);
        Ok(id)
    }

    pub fn request(
        &mut self,
        key_id: &str,
        presented: &Measurement,
    ) -> Result<SymmetricKey, Denial> {
        let record = self.records.get_mut(key_id).ok_or(Denial::UnknownKey)?;
        if record.released {
            return Err(Denial::AlreadyReleased);
        }
        if record.expected_measurement != *presented {
            return Err(Denial::MeasurementMismatch);
        }
        record.released = true;
        // Moving the key out leaves nothing behind; the caller's copy is wiped on drop.
        record.key.take().ok_or(Denial::AlreadyReleased)
    }

    pub fn record(&self, key_id: &str) -> Option<&KeyRecord> {
        self.records.get(key_id)
    }

    pub fn records(&self) -> impl Iterator<Item = &KeyRecord> {
        self.records.values()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::config::tests::sample_config;

    fn measurement() -> Measurement {
        attest(ComponentKind::DataHandler, CODE_VERSION, &sample_config())
    }

    #[test]
    fn measurement_is_deterministic_and_sensitive() {
        let c = sample_config();
        let m = attest(ComponentKind::Admin, CODE_VERSION, &c);
        assert_eq!(m, attest(ComponentKind::Admin, CODE_VERSION, &c.clone()));
        assert_ne!(m, attest(ComponentKind::Admin, "other-version", &c));
        assert_ne!(m, attest(ComponentKind::DataHandler, CODE_VERSION, &c));
        let mut changed = c.clone();
        changed.learning_rate += 1e-12;
        assert_ne!(m, attest(ComponentKind::Admin, CODE_VERSION, &changed));
        assert_eq!(m.to_hex().len(), 64);
    }

    #[test]
    fn register_and_release_once() {
        let mut kds = Kds::new();
        let key = SymmetricKey::generate();
        let bytes = *key.as_bytes();
        kds.register(KeyRecord::new("k1", key, measurement(), "unit"))
            .unwrap();
        assert!(matches!(
            kds.register(KeyRecord::new(
                "k1",
                SymmetricKey::generate(),
                measurement(),
                "unit"
            )),
            Err(ProtocolError::DuplicateKey(_))
        ));
        assert!(!kds.record("k1").unwrap().released());
        let got = kds.request("k1", &measurement()).unwrap();
        assert_eq!(got.as_bytes(), &bytes);
        let rec = kds.record("k1").unwrap();
        assert!(rec.released() && rec.key_erased());
        assert_eq!(
            kds.request("k1", &measurement()).unwrap_err(),
            Denial::AlreadyReleased
        );
    }

    #[test]
    fn denials() {
        let mut kds = Kds::new();
        kds.register(KeyRecord::new(
            "k",
            SymmetricKey::generate(),
            measurement(),
            "unit",
        ))
        .unwrap();
        assert_eq!(
            kds.request("nope", &measurement()).unwrap_err(),
            Denial::UnknownKey
        );
        // A single flipped bit in the config bytes changes the digest.
        let mut tweaked = sample_config();
        tweaked.seed ^= 1;
        let wrong = attest(ComponentKind::DataHandler, CODE_VERSION, &tweaked);
        assert_eq!(
            kds.request("k", &wrong).unwrap_err(),
            Denial::MeasurementMismatch
        );
        assert!(!kds.record("k").unwrap().released());
        assert!(kds.request("k", &measurement()).is_ok());
    }
}
