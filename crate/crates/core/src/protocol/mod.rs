//! Session orchestration: an admin, a model updater and one data handler per
//! data owner exchanging authenticated envelopes, with keys released by a KDS
//! only to components whose measurement matches the agreed session config.

mod assets;
mod components;
mod config;
mod crypto;
mod envelope;
mod kds;
mod message;
mod plugin;
mod report;
mod session;

pub use assets::{decode_batch, encode_batch, AssetStore};
pub use components::{
    batch_indices, data_handler_step, data_key_id, masked_gradient, model_update_step,
    transport_key_id, Actor, Admin, AdminTrace, DataHandler, ModelUpdater, TEST_KEY_ID,
};
pub use config::{
    DatasetRef, DatasetSource, DynamicClipping, ModelSpec, SessionConfig, Shard, StopConditions,
};
pub use crypto::{
    open_asset, seal_asset, SymmetricKey, KEY_LEN, NONCE_LEN, SEALED_VERSION, TAG_LEN,
};
pub use envelope::{ComponentId, Envelope, MessageKind, SecureChannel};
pub use kds::{attest, ComponentKind, Denial, Kds, KeyRecord, Measurement, CODE_VERSION};
pub use message::{Message, StopReason};
pub use plugin::{
    backprop_factory, run_plugin, BackpropPlugin, GradientPlugin, PluginFactory, PluginRegistry,
    Scratch,
};
pub use report::{IterationRecord, TrainingReport, CSV_HEADER};
pub use session::{
    audit_violations, channel_allows, resolve_noise, run_session, AuditEntry, Deployment,
    IterationTrace, NoiseSchedule, RunOptions, Scheduler, SessionOutcome, DEFAULT_REPORT_DELTA,
};

use crate::accounting::AccountingError;
use crate::privacy::PrivacyError;
use crate::tensor::TensorError;

#[derive(Debug, thiserror::Error)]
pub enum ProtocolError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("key id {0} is already registered")]
    DuplicateKey(String),
    #[error("key {key_id} denied: {reason}")]
    KeyDenied { key_id: String, reason: Denial },
    #[error("authentication failed: ciphertext or header was modified")]
    Tamper,
    #[error("replayed or reordered envelope from {sender} (sequence {sequence})")]
    Replay { sender: ComponentId, sequence: u64 },
    #[error("envelope for {found} delivered to {expected}")]
    Misrouted {
        expected: ComponentId,
        found: ComponentId,
    },
    #[error("malformed wire data: {0}")]
    Wire(String),
    #[error("synchronization error at iteration {iteration}: {message}")]
    Sync { iteration: u64, message: String },
    #[error("plugin on worker {worker} violated its contract: {message}")]
    PluginViolation { worker: u32, message: String },
    #[error("{component} failed at iteration {iteration}: {source}")]
    Component {
        component: ComponentId,
        iteration: u64,
        #[source]
        source: Box<ProtocolError>,
    },
    #[error("session stalled: {0}")]
    Stalled(String),
    #[error("session aborted by a failing peer")]
    Aborted,
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Privacy(#[from] PrivacyError),
    #[error(transparent)]
    Accounting(#[from] AccountingError),
}

impl ProtocolError {
    /// The underlying error with any component context peeled off.
    pub fn root(&self) -> &ProtocolError {
        match self {
            ProtocolError::Component { source, .. } => source.root(),
            other => other,
        }
    }
}
