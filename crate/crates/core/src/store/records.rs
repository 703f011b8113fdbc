//! Authenticated record files.
//!
//! ```text
//! header: "DDSR" | 0x01 | keyset_id (16) | salt (16)
//! chunk:  seq_no (u32 BE) | nonce (12) | ct_len (u32 BE) | ct
//! ```
//!
//! Each chunk's AAD is `SHA-256(header) | seq_no (BE) | final flag`. The
//! file ends with a sentinel chunk (final flag set, empty plaintext), so
//! reordering, splicing between files and truncation all fail to verify.

use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use super::{open, random_bytes, seal, write_atomic, AuthFailure, ChunkFault, Keyset, StoreError};
use super::{KEYSET_ID_LEN, NONCE_LEN, SALT_LEN, TAG_LEN};

pub const RECORD_MAGIC: &[u8; 4] = b"DDSR";
pub const RECORD_VERSION: u8 = 0x01;
pub const RECORD_HEADER_LEN: usize = 4 + 1 + KEYSET_ID_LEN + SALT_LEN;
const CHUNK_HEAD_LEN: usize = 4 + NONCE_LEN + 4;
const MAX_RECORD_LEN: usize = (u32::MAX as usize) - TAG_LEN;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RecordHeader {
    pub keyset_id: [u8; KEYSET_ID_LEN],
    /// Per-file random value; makes every file's chunk AAD distinct.
    pub salt: [u8; SALT_LEN],
}

impl RecordHeader {
    pub fn to_bytes(&self) -> [u8; RECORD_HEADER_LEN] {
        let mut out = [0u8; RECORD_HEADER_LEN];
        out[..4].copy_from_slice(RECORD_MAGIC);
        out[4] = RECORD_VERSION;
        out[5..5 + KEYSET_ID_LEN].copy_from_slice(&self.keyset_id);
        out[5 + KEYSET_ID_LEN..].copy_from_slice(&self.salt);
        out
    }

    pub fn parse(b: &[u8]) -> Option<Self> {
        if b.len() < RECORD_HEADER_LEN || &b[..4] != RECORD_MAGIC || b[4] != RECORD_VERSION {
            return None;
        }
        Some(Self {
            keyset_id: b[5..5 + KEYSET_ID_LEN].try_into().ok()?,
            salt: b[5 + KEYSET_ID_LEN..RECORD_HEADER_LEN].try_into().ok()?,
        })
    }
}

fn chunk_aad(header_hash: &[u8; 32], seq: u32, last: bool) -> [u8; 37] {
    let mut aad = [0u8; 37];
    aad[..32].copy_from_slice(header_hash);
    aad[32..36].copy_from_slice(&seq.to_be_bytes());
    aad[36] = u8::from(last);
    aad
}

fn push_chunk(
    out: &mut Vec<u8>,
    keyset: &Keyset,
    hash: &[u8; 32],
    seq: u32,
    last: bool,
    msg: &[u8],
) {
    let nonce = random_bytes::<NONCE_LEN>();
    let ct = seal(keyset.value_key(), &nonce, &chunk_aad(hash, seq, last), msg);
    out.extend_from_slice(&seq.to_be_bytes());
    out.extend_from_slice(&nonce);
    out.extend_from_slice(&(ct.len() as u32).to_be_bytes());
    out.extend_from_slice(&ct);
}

/// Encrypts `records` into a complete record file image.
pub fn seal_records<R: AsRef<[u8]>>(keyset: &Keyset, records: &[R]) -> Result<Vec<u8>, StoreError> {
    if records.len() >= u32::MAX as usize {
        return Err(StoreError::TooLarge(records.len()));
    }
    let header = RecordHeader {
        keyset_id: *keyset.id(),
        salt: random_bytes::<SALT_LEN>(),
    }
    .to_bytes();
    let hash: [u8; 32] = Sha256::digest(header).into();
    let body: usize = records
        .iter()
        .map(|r| r.as_ref().len() + CHUNK_HEAD_LEN + TAG_LEN)
        .sum();
    let mut out = Vec::with_capacity(RECORD_HEADER_LEN + body + CHUNK_HEAD_LEN + TAG_LEN);
    out.extend_from_slice(&header);
    for (seq, r) in records.iter().enumerate() {
        let r = r.as_ref();
        if r.len() > MAX_RECORD_LEN {
            return Err(StoreError::TooLarge(r.len()));
        }
        push_chunk(&mut out, keyset, &hash, seq as u32, false, r);
    }
    push_chunk(&mut out, keyset, &hash, records.len() as u32, true, &[]);
    Ok(out)
}

/// Verifies and decrypts a record file image, failing at the first bad chunk.
pub fn open_records(keyset: &Keyset, bytes: &[u8]) -> Result<Vec<Vec<u8>>, StoreError> {
    let header = RecordHeader::parse(bytes)
        .filter(|h| &h.keyset_id == keyset.id())
        .ok_or(StoreError::Auth(AuthFailure::Header))?;
    let hash: [u8; 32] = Sha256::digest(header.to_bytes()).into();
    let fault = |seq, fault| StoreError::Auth(AuthFailure::Chunk { seq, fault });

    let mut records = Vec::new();
    let mut pos = RECORD_HEADER_LEN;
    let mut seq: u32 = 0;
    loop {
        let rest = &bytes[pos..];
        if rest.is_empty() {
            return Err(fault(seq, ChunkFault::MissingSentinel));
        }
        if rest.len() < CHUNK_HEAD_LEN {
            return Err(fault(seq, ChunkFault::Truncated));
        }
        let stored_seq = u32::from_be_bytes(rest[..4].try_into().expect("length checked"));
        if stored_seq != seq {
            return Err(fault(seq, ChunkFault::Sequence));
        }
        let nonce = &rest[4..4 + NONCE_LEN];
        let ct_len = u32::from_be_bytes(
            rest[4 + NONCE_LEN..CHUNK_HEAD_LEN]
                .try_into()
                .expect("length checked"),
        ) as usize;
        if rest.len() - CHUNK_HEAD_LEN < ct_len {
            return Err(fault(seq, ChunkFault::Truncated));
        }
        let ct = &rest[CHUNK_HEAD_LEN..CHUNK_HEAD_LEN + ct_len];
        pos += CHUNK_HEAD_LEN + ct_len;

        if let Some(pt) = open(keyset.value_key(), nonce, &chunk_aad(&hash, seq, false), ct) {
            records.push(pt);
        } else if ct_len == TAG_LEN
            && open(keyset.value_key(), nonce, &chunk_aad(&hash, seq, true), ct).is_some()
        {
            if pos != bytes.len() {
                return Err(fault(seq + 1, ChunkFault::TrailingData));
            }
            return Ok(records);
        } else {
            return Err(fault(seq, ChunkFault::Tag));
        }
        seq = seq.checked_add(1).ok_or(fault(seq, ChunkFault::Sequence))?;
    }
}

/// Writes a record file atomically (temp file + rename).
pub fn write_records<R: AsRef<[u8]>>(
    path: impl AsRef<Path>,
    keyset: &Keyset,
    records: &[R],
) -> Result<(), StoreError> {
    write_atomic(path.as_ref(), &seal_records(keyset, records)?)?;
    Ok(())
}

pub fn read_records(path: impl AsRef<Path>, keyset: &Keyset) -> Result<Vec<Vec<u8>>, StoreError> {
    open_records(keyset, &fs::read(path)?)
}
