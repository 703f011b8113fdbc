use std::fmt;

use hmac::{Hmac, Mac};
use sha2::Sha256;
use zeroize::{Zeroize, ZeroizeOnDrop};

use super::{
    open, random_bytes, seal, AuthFailure, KeyTag, MasterKey, StoreError, KEY_LEN, NONCE_LEN,
    TAG_LEN,
};

pub const KEYSET_ID_LEN: usize = 16;
const WRAP_AAD_PREFIX: &[u8; 4] = b"DDSK";

/// Working keys, plaintext only in memory.
#[derive(Clone, Zeroize, ZeroizeOnDrop)]
pub struct Keyset {
    id: [u8; KEYSET_ID_LEN],
    key_tag_key: [u8; KEY_LEN],
    value_key: [u8; KEY_LEN],
}

impl Keyset {
    pub fn id(&self) -> &[u8; KEYSET_ID_LEN] {
        &self.id
    }

    pub(crate) fn value_key(&self) -> &[u8; KEY_LEN] {
        &self.value_key
    }

    /// Deterministic tag for a preference name (HMAC-SHA256 under the tag key).
    pub fn key_tag(&self, name: &str) -> KeyTag {
        let mut mac = Hmac::<Sha256>::new_from_slice(&self.key_tag_key).expect("any key length");
        mac.update(name.as_bytes());
        KeyTag(mac.finalize().into_bytes().into())
    }

    /// Same key material, for round-trip checks.
    pub fn same_material(&self, other: &Keyset) -> bool {
        self.id == other.id
            && self.key_tag_key == other.key_tag_key
            && self.value_key == other.value_key
    }
}

impl fmt::Debug for Keyset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Keyset(id={})", hex(&self.id))
    }
}

fn hex(b: &[u8]) -> String {
    b.iter().map(|x| format!("{x:02x}")).collect()
}

/// A keyset sealed under the master key: `id (16) | nonce (12) | ct_len (u32 BE) | ct`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WrappedKeyset {
    pub keyset_id: [u8; KEYSET_ID_LEN],
    pub nonce: [u8; NONCE_LEN],
    pub ct: Vec<u8>,
}

impl WrappedKeyset {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(KEYSET_ID_LEN + NONCE_LEN + 4 + self.ct.len());
        out.extend_from_slice(&self.keyset_id);
        out.extend_from_slice(&self.nonce);
        out.extend_from_slice(&(self.ct.len() as u32).to_be_bytes());
        out.extend_from_slice(&self.ct);
        out
    }

    pub fn from_bytes(b: &[u8]) -> Option<Self> {
        let head = KEYSET_ID_LEN + NONCE_LEN + 4;
        if b.len() < head {
            return None;
        }
        let len = u32::from_be_bytes(b[head - 4..head].try_into().ok()?) as usize;
        if b.len() != head + len {
            return None;
        }
        Some(Self {
            keyset_id: b[..KEYSET_ID_LEN].try_into().ok()?,
            nonce: b[KEYSET_ID_LEN..KEYSET_ID_LEN + NONCE_LEN]
                .try_into()
                .ok()?,
            ct: b[head..].to_vec(),
        })
    }
}

fn wrap_aad(id: &[u8; KEYSET_ID_LEN]) -> Vec<u8> {
    [WRAP_AAD_PREFIX.as_slice(), id.as_slice()].concat()
}

/// Generates fresh working keys and wraps them under `master`.
pub fn create_keyset(master: &MasterKey) -> WrappedKeyset {
    let keyset_id = random_bytes::<KEYSET_ID_LEN>();
    let nonce = random_bytes::<NONCE_LEN>();
    let mut material = [0u8; 2 * KEY_LEN];
    material[..KEY_LEN].copy_from_slice(&random_bytes::<KEY_LEN>());
    material[KEY_LEN..].copy_from_slice(&random_bytes::<KEY_LEN>());
    let ct = seal(master.bytes(), &nonce, &wrap_aad(&keyset_id), &material);
    material.zeroize();
    WrappedKeyset {
        keyset_id,
        nonce,
        ct,
    }
}

pub fn open_keyset(master: &MasterKey, wrapped: &WrappedKeyset) -> Result<Keyset, StoreError> {
    let fail = StoreError::Auth(AuthFailure::Keyset);
    if wrapped.ct.len() != 2 * KEY_LEN + TAG_LEN {
        return Err(fail);
    }
    let mut material = open(
        master.bytes(),
        &wrapped.nonce,
        &wrap_aad(&wrapped.keyset_id),
        &wrapped.ct,
    )
    .ok_or(fail)?;
    let keyset = Keyset {
        id: wrapped.keyset_id,
        key_tag_key: material[..KEY_LEN].try_into().expect("length checked"),
        value_key: material[KEY_LEN..].try_into().expect("length checked"),
    };
    material.zeroize();
    Ok(keyset)
}
