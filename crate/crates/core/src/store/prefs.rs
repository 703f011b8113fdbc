//! Encrypted key-value preferences.
//!
//! Names are replaced by a deterministic keyed tag so lookups work without
//! ever storing the name; values are sealed with a fresh random nonce, so
//! equal values never produce equal ciphertexts.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use super::{
    open, random_bytes, read_records, seal, write_records, AuthFailure, Keyset, StoreError,
    NONCE_LEN,
};

/// Format version bound into every value's AAD.
pub const PREF_VERSION: u8 = 0x01;

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct KeyTag(pub [u8; 32]);

impl fmt::Display for KeyTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.iter().try_for_each(|b| write!(f, "{b:02x}"))
    }
}

impl fmt::Debug for KeyTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "KeyTag({self})")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncryptedPrefEntry {
    pub key_tag: KeyTag,
    pub nonce: [u8; NONCE_LEN],
    pub ct: Vec<u8>,
}

fn value_aad(tag: &KeyTag) -> [u8; 33] {
    let mut aad = [0u8; 33];
    aad[0] = PREF_VERSION;
    aad[1..].copy_from_slice(&tag.0);
    aad
}

impl EncryptedPrefEntry {
    /// `key_tag_len (u16 BE) | key_tag | nonce (12) | ct`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(2 + 32 + NONCE_LEN + self.ct.len());
        out.extend_from_slice(&32u16.to_be_bytes());
        out.extend_from_slice(&self.key_tag.0);
        out.extend_from_slice(&self.nonce);
        out.extend_from_slice(&self.ct);
        out
    }

    pub fn from_bytes(b: &[u8]) -> Option<Self> {
        let tag_len = u16::from_be_bytes(b.get(..2)?.try_into().ok()?) as usize;
        if tag_len != 32 {
            return None;
        }
        let tag = b.get(2..34)?;
        let nonce = b.get(34..34 + NONCE_LEN)?;
        Some(Self {
            key_tag: KeyTag(tag.try_into().ok()?),
            nonce: nonce.try_into().ok()?,
            ct: b[34 + NONCE_LEN..].to_vec(),
        })
    }

    fn decrypt(&self, keyset: &Keyset) -> Result<Vec<u8>, StoreError> {
        open(
            keyset.value_key(),
            &self.nonce,
            &value_aad(&self.key_tag),
            &self.ct,
        )
        .ok_or(StoreError::Auth(AuthFailure::Entry))
    }
}

/// In-memory view of the preference file.
#[derive(Debug, Clone, Default)]
pub struct PrefStore {
    entries: BTreeMap<KeyTag, EncryptedPrefEntry>,
}

impl PrefStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn load(path: &Path, keyset: &Keyset) -> Result<Self, StoreError> {
        let mut entries = BTreeMap::new();
        for rec in read_records(path, keyset)? {
            let e =
                EncryptedPrefEntry::from_bytes(&rec).ok_or(StoreError::Auth(AuthFailure::Entry))?;
            entries.insert(e.key_tag, e);
        }
        Ok(Self { entries })
    }

    pub fn save(&self, path: &Path, keyset: &Keyset) -> Result<(), StoreError> {
        let recs: Vec<Vec<u8>> = self
            .entries
            .values()
            .map(EncryptedPrefEntry::to_bytes)
            .collect();
        write_records(path, keyset, &recs)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn tags(&self) -> impl Iterator<Item = &KeyTag> {
        self.entries.keys()
    }

    pub fn entry(&self, keyset: &Keyset, name: &str) -> Option<&EncryptedPrefEntry> {
        self.entries.get(&keyset.key_tag(name))
    }

    pub fn put(&mut self, keyset: &Keyset, name: &str, value: &[u8]) -> &EncryptedPrefEntry {
        let key_tag = keyset.key_tag(name);
        let nonce = random_bytes::<NONCE_LEN>();
        let ct = seal(keyset.value_key(), &nonce, &value_aad(&key_tag), value);
        self.entries
            .insert(key_tag, EncryptedPrefEntry { key_tag, nonce, ct });
        &self.entries[&key_tag]
    }

    pub fn get(&self, keyset: &Keyset, name: &str) -> Result<Vec<u8>, StoreError> {
        self.entry(keyset, name)
            .ok_or_else(|| StoreError::NotFound(name.to_string()))?
            .decrypt(keyset)
    }

    pub fn get_by_tag(&self, keyset: &Keyset, tag: &KeyTag) -> Result<Vec<u8>, StoreError> {
        self.entries
            .get(tag)
            .ok_or_else(|| StoreError::NotFound(format!("tag:{tag}")))?
            .decrypt(keyset)
    }

    /// Replaces an entry verbatim, for tamper tests.
    pub fn insert_raw(&mut self, entry: EncryptedPrefEntry) {
        self.entries.insert(entry.key_tag, entry);
    }
}
