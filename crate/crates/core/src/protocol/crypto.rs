use chacha20poly1305::aead::{Aead, KeyInit, Payload};
use chacha20poly1305::{ChaCha20Poly1305, Key, Nonce};
use rand::RngCore;
use zeroize::{Zeroize, ZeroizeOnDrop};

use super::ProtocolError;

pub const KEY_LEN: usize = 32;
pub const NONCE_LEN: usize = 12;
pub const TAG_LEN: usize = 16;
pub const SEALED_VERSION: u8 = 1;

/// 256-bit symmetric key, wiped from memory on drop.
#[derive(Clone, PartialEq, Eq, Zeroize, ZeroizeOnDrop)]
pub struct SymmetricKey([u8; KEY_LEN]);

impl SymmetricKey {
    pub fn from_bytes(bytes: [u8; KEY_LEN]) -> Self {
        Self(bytes)
    }

    pub fn generate() -> Self {
        let mut bytes = [0u8; KEY_LEN];
        rand::rng().fill_bytes(&mut bytes);
        Self(bytes)
    }

    pub fn as_bytes(&self) -> &[u8; KEY_LEN] {
        &self.0
    }

    fn cipher(&self) -> ChaCha20Poly1305 {
        ChaCha20Poly1305::new(Key::from_slice(&self.0))
    }
}

impl std::fmt::Debug for SymmetricKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("SymmetricKey(..)")
    }
}

pub(crate) fn encrypt(
    key: &SymmetricKey,
    nonce: &[u8; NONCE_LEN],
    plaintext: &[u8],
    aad: &[u8],
) -> Vec<u8> {
    key.cipher()
        .encrypt(
            Nonce::from_slice(nonce),
            Payload {
                msg: plaintext,
                aad,
            },
        )
        .expect("in-memory ChaCha20-Poly1305 encryption does not fail")
}

pub(crate) fn decrypt(
    key: &SymmetricKey,
    nonce: &[u8; NONCE_LEN],
    ciphertext: &[u8],
    aad: &[u8],
) -> Result<Vec<u8>, ProtocolError> {
    key.cipher()
        .decrypt(
            Nonce::from_slice(nonce),
            Payload {
                msg: ciphertext,
                aad,
            },
        )
        .map_err(|_| ProtocolError::Tamper)
}

/// Encrypt at rest: `[version][12-byte nonce][ciphertext][16-byte tag]`.
pub fn seal_asset(plaintext: &[u8], key: &SymmetricKey) -> Vec<u8> {
    let mut nonce = [0u8; NONCE_LEN];
    rand::rng().fill_bytes(&mut nonce);
    let aad = [SEALED_VERSION];
    let sealed = encrypt(key, &nonce, plaintext, &aad);
    let mut out = Vec::with_capacity(1 + NONCE_LEN + sealed.len());
    out.push(SEALED_VERSION);
    out.extend_from_slice(&nonce);
    out.extend_from_slice(&sealed);
    out
}

pub fn open_asset(blob: &[u8], key: &SymmetricKey) -> Result<Vec<u8>, ProtocolError> {
    if blob.len() < 1 + NONCE_LEN + TAG_LEN || blob[0] != SEALED_VERSION {
        return Err(ProtocolError::Tamper);
    }
    let nonce: [u8; NONCE_LEN] = blob[1..1 + NONCE_LEN].try_into().expect("sliced to length");
    decrypt(key, &nonce, &blob[1 + NONCE_LEN..], &blob[..1])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_layout() {
        let key = SymmetricKey::generate();
        let blob = seal_asset(b"training shard", &key);
        assert_eq!(blob.len(), 1 + NONCE_LEN + 14 + TAG_LEN);
        assert_eq!(blob[0], SEALED_VERSION);
        assert_eq!(open_asset(&blob, &key).unwrap(), b"training shard");
    }

    #[test]
    fn any_bit_flip_is_detected() {
        let key = SymmetricKey::generate();
        let blob = seal_asset(b"abc", &key);
        for byte in 0..blob.len() {
            for bit in 0..8 {
                let mut bad = blob.clone();
                bad[byte] ^= 1 << bit;
                assert!(matches!(open_asset(&bad, &key), Err(ProtocolError::Tamper)));
            }
        }
    }

    #[test]
    fn wrong_key_and_truncation() {
        let blob = seal_asset(b"abc", &SymmetricKey::generate());
        assert!(open_asset(&blob, &SymmetricKey::generate()).is_err());
        assert!(open_asset(&blob[..10], &SymmetricKey::from_bytes([0; 32])).is_err());
    }

    #[test]
    fn nonces_are_fresh() {
        let key = SymmetricKey::generate();
        assert_ne!(seal_asset(b"x", &key), seal_asset(b"x", &key));
    }
}
