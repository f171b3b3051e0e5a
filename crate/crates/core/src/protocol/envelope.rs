//! Authenticated envelopes and their wire format.
//!
//! Wire layout: six fields in order (sender, recipient, sequence, kind, nonce,
//! ciphertext with tag), each preceded by its byte length as a u32 LE. The
//! first four fields, encoded the same way, are the AEAD associated data.

use std::collections::HashMap;

use super::crypto::{decrypt, encrypt, SymmetricKey, NONCE_LEN, TAG_LEN};
use super::message::Message;
use super::ProtocolError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ComponentId {
    Admin,
    Updater,
    Worker(u32),
}

impl ComponentId {
    fn to_bytes(self) -> [u8; 5] {
        let (tag, index) = match self {
            ComponentId::Admin => (0u8, 0u32),
            ComponentId::Updater => (1, 0),
            ComponentId::Worker(i) => (2, i),
        };
        let mut out = [0u8; 5];
        out[0] = tag;
        out[1..].copy_from_slice(&index.to_le_bytes());
        out
    }

    fn from_bytes(b: &[u8]) -> Result<Self, ProtocolError> {
        if b.len() != 5 {
            return Err(ProtocolError::Wire("component id must be 5 bytes".into()));
        }
        let index = u32::from_le_bytes(b[1..5].try_into().expect("4 bytes"));
        match (b[0], index) {
            (0, 0) => Ok(ComponentId::Admin),
            (1, 0) => Ok(ComponentId::Updater),
            (2, i) => Ok(ComponentId::Worker(i)),
            _ => Err(ProtocolError::Wire(format!(
                "bad component id tag {}",
                b[0]
            ))),
        }
    }

    /// Compact code used in nonces. Config validation keeps worker indices in range.
    fn nonce_code(self) -> u16 {
        match self {
            ComponentId::Admin => 0,
            ComponentId::Updater => 1,
            ComponentId::Worker(i) => u16::try_from(i + 2).expect("worker index fits in u16"),
        }
    }

    pub fn key_suffix(self) -> String {
        match self {
            ComponentId::Admin => "admin".into(),
            ComponentId::Updater => "updater".into(),
            ComponentId::Worker(i) => format!("worker-{i}"),
        }
    }
}

impl std::fmt::Display for ComponentId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.key_suffix())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MessageKind {
    Register = 1,
    IterationStart = 2,
    Histogram = 3,
    ClipBound = 4,
    Mask = 5,
    MaskedGradient = 6,
    UpdateResult = 7,
    Stop = 8,
}

impl MessageKind {
    pub fn from_u8(v: u8) -> Result<Self, ProtocolError> {
        Ok(match v {
            1 => MessageKind::Register,
            2 => MessageKind::IterationStart,
            3 => MessageKind::Histogram,
            4 => MessageKind::ClipBound,
            5 => MessageKind::Mask,
            6 => MessageKind::MaskedGradient,
            7 => MessageKind::UpdateResult,
            8 => MessageKind::Stop,
            _ => return Err(ProtocolError::Wire(format!("unknown message kind {v}"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Envelope {
    pub sender: ComponentId,
    pub recipient: ComponentId,
    pub sequence: u64,
    pub kind: MessageKind,
    pub nonce: [u8; NONCE_LEN],
    pub ciphertext: Vec<u8>,
}

fn put_field(out: &mut Vec<u8>, field: &[u8]) {
    out.extend_from_slice(&(field.len() as u32).to_le_bytes());
    out.extend_from_slice(field);
}

fn header_bytes(
    sender: ComponentId,
    recipient: ComponentId,
    sequence: u64,
    kind: MessageKind,
) -> Vec<u8> {
    let mut out = Vec::with_capacity(4 * 4 + 5 + 5 + 8 + 1);
    put_field(&mut out, &sender.to_bytes());
    put_field(&mut out, &recipient.to_bytes());
    put_field(&mut out, &sequence.to_le_bytes());
    put_field(&mut out, &[kind as u8]);
    out
}

fn derive_nonce(sender: ComponentId, recipient: ComponentId, sequence: u64) -> [u8; NONCE_LEN] {
    let mut nonce = [0u8; NONCE_LEN];
    nonce[0..2].copy_from_slice(&sender.nonce_code().to_le_bytes());
    nonce[2..4].copy_from_slice(&recipient.nonce_code().to_le_bytes());
    nonce[4..12].copy_from_slice(&sequence.to_le_bytes());
    nonce
}

impl Envelope {
    pub fn header(&self) -> Vec<u8> {
        header_bytes(self.sender, self.recipient, self.sequence, self.kind)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = self.header();
        put_field(&mut out, &self.nonce);
        put_field(&mut out, &self.ciphertext);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ProtocolError> {
        let mut fields = Vec::with_capacity(6);
        let mut pos = 0;
        while fields.len() < 6 {
            let len_bytes = bytes
                .get(pos..pos + 4)
                .ok_or_else(|| ProtocolError::Wire(format!("truncated length at byte {pos}")))?;
            let len = u32::from_le_bytes(len_bytes.try_into().expect("4 bytes")) as usize;
            pos += 4;
            let field = bytes
                .get(pos..pos + len)
                .ok_or_else(|| ProtocolError::Wire(format!("truncated field at byte {pos}")))?;
            fields.push(field);
            pos += len;
        }
        if pos != bytes.len() {
            return Err(ProtocolError::Wire("trailing bytes after envelope".into()));
        }
        let sequence = u64::from_le_bytes(
            fields[2]
                .try_into()
                .map_err(|_| ProtocolError::Wire("sequence must be 8 bytes".into()))?,
        );
        if fields[3].len() != 1 {
            return Err(ProtocolError::Wire("kind must be 1 byte".into()));
        }
        if fields[5].len() < TAG_LEN {
            return Err(ProtocolError::Wire("ciphertext shorter than tag".into()));
        }
        Ok(Self {
            sender: ComponentId::from_bytes(fields[0])?,
            recipient: ComponentId::from_bytes(fields[1])?,
            sequence,
            kind: MessageKind::from_u8(fields[3][0])?,
            nonce: fields[4]
                .try_into()
                .map_err(|_| ProtocolError::Wire("nonce must be 12 bytes".into()))?,
            ciphertext: fields[5].to_vec(),
        })
    }
}

/// One component's end of the encrypted transport: per-peer send counters and
/// the highest sequence accepted from each peer.
#[derive(Debug)]
pub struct SecureChannel {
    me: ComponentId,
    key: SymmetricKey,
    next_seq: HashMap<ComponentId, u64>,
    last_seen: HashMap<ComponentId, u64>,
}

impl SecureChannel {
    pub fn new(me: ComponentId, key: SymmetricKey) -> Self {
        Self {
            me,
            key,
            next_seq: HashMap::new(),
            last_seen: HashMap::new(),
        }
    }

    pub fn id(&self) -> ComponentId {
        self.me
    }

    pub fn seal(&mut self, recipient: ComponentId, message: &Message) -> Envelope {
        let seq = self.next_seq.entry(recipient).or_insert(1);
        let sequence = *seq;
        *seq += 1;
        let kind = message.kind();
        let nonce = derive_nonce(self.me, recipient, sequence);
        let aad = header_bytes(self.me, recipient, sequence, kind);
        let ciphertext = encrypt(&self.key, &nonce, &message.encode_payload(), &aad);
        Envelope {
            sender: self.me,
            recipient,
            sequence,
            kind,
            nonce,
            ciphertext,
        }
    }

    pub fn open(&mut self, envelope: &Envelope) -> Result<Message, ProtocolError> {
        if envelope.recipient != self.me {
            return Err(ProtocolError::Misrouted {
                expected: self.me,
                found: envelope.recipient,
            });
        }
        if envelope.nonce != derive_nonce(envelope.sender, envelope.recipient, envelope.sequence) {
            return Err(ProtocolError::Tamper);
        }
        let plaintext = decrypt(
            &self.key,
            &envelope.nonce,
            &envelope.ciphertext,
            &envelope.header(),
        )?;
        let last = self.last_seen.get(&envelope.sender).copied().unwrap_or(0);
        if envelope.sequence <= last {
            return Err(ProtocolError::Replay {
                sender: envelope.sender,
                sequence: envelope.sequence,
            });
        }
        let message = Message::decode(envelope.kind, &plaintext)?;
        self.last_seen.insert(envelope.sender, envelope.sequence);
        Ok(message)
    }
}
