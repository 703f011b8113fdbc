//! Encrypted storage: a passphrase-derived master key wraps a keyset, and
//! the keyset protects preferences and record files.
//!
//! On disk a store is a directory holding `keyset.bin` (KDF parameters and
//! the wrapped keyset) and `prefs.ddsr` (a record file of encrypted
//! preference entries).

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use aes_gcm::aead::{Aead, KeyInit, Payload};
use aes_gcm::{Aes256Gcm, Key, Nonce};
use rand::rngs::OsRng;
use rand::RngCore;

mod kdf;
mod keyset;
mod prefs;
mod records;

pub use kdf::{derive_master_key, KdfParams, MasterKey, DEFAULT_ITERATIONS, MIN_ITERATIONS};
pub use keyset::{create_keyset, open_keyset, Keyset, WrappedKeyset, KEYSET_ID_LEN};
pub use prefs::{EncryptedPrefEntry, KeyTag, PrefStore, PREF_VERSION};
pub use records::{
    open_records, read_records, seal_records, write_records, RecordHeader, RECORD_HEADER_LEN,
    RECORD_MAGIC, RECORD_VERSION,
};

pub const KEY_LEN: usize = 32;
pub const NONCE_LEN: usize = 12;
pub const TAG_LEN: usize = 16;
pub const SALT_LEN: usize = 16;

const KEYSET_FILE: &str = "keyset.bin";
const PREFS_FILE: &str = "prefs.ddsr";
const KEYSET_FILE_MAGIC: &[u8; 4] = b"DDSK";
const KEYSET_FILE_VERSION: u8 = 1;

/// What went wrong inside a record file chunk.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChunkFault {
    /// Tag did not verify (bit flip, splice, wrong key).
    Tag,
    /// Stored sequence number differs from the chunk's position.
    Sequence,
    /// File ends inside the chunk.
    Truncated,
    /// File ends cleanly but without the final sentinel chunk.
    MissingSentinel,
    /// Bytes follow the sentinel.
    TrailingData,
}

impl fmt::Display for ChunkFault {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ChunkFault::Tag => "tag mismatch",
            ChunkFault::Sequence => "out of sequence",
            ChunkFault::Truncated => "truncated",
            ChunkFault::MissingSentinel => "missing sentinel",
            ChunkFault::TrailingData => "data after sentinel",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AuthFailure {
    /// Wrong master key or tampered keyset wrap.
    Keyset,
    /// Record file header is malformed or belongs to another keyset.
    Header,
    /// First chunk that failed to verify, by position.
    Chunk { seq: u32, fault: ChunkFault },
    /// A preference entry failed to verify.
    Entry,
}

impl fmt::Display for AuthFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AuthFailure::Keyset => f.write_str("keyset"),
            AuthFailure::Header => f.write_str("record header"),
            AuthFailure::Chunk { seq, fault } => write!(f, "chunk {seq} ({fault})"),
            AuthFailure::Entry => f.write_str("preference entry"),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("kdf iterations {iterations} below minimum {minimum}")]
    WeakParams { iterations: u32, minimum: u32 },
    #[error("authentication failed: {0}")]
    Auth(AuthFailure),
    #[error("no preference named {0:?}")]
    NotFound(String),
    #[error("store already exists at {0}")]
    Exists(PathBuf),
    #[error("record too large: {0} bytes")]
    TooLarge(usize),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl StoreError {
    pub fn is_auth(&self) -> bool {
        matches!(self, StoreError::Auth(_))
    }
}

pub(crate) fn random_bytes<const N: usize>() -> [u8; N] {
    let mut b = [0u8; N];
    OsRng.fill_bytes(&mut b);
    b
}

/// Fresh random KDF salt.
pub fn fresh_salt() -> [u8; SALT_LEN] {
    random_bytes()
}

pub(crate) fn seal(
    key: &[u8; KEY_LEN],
    nonce: &[u8; NONCE_LEN],
    aad: &[u8],
    msg: &[u8],
) -> Vec<u8> {
    Aes256Gcm::new(Key::<Aes256Gcm>::from_slice(key))
        .encrypt(Nonce::from_slice(nonce), Payload { msg, aad })
        .expect("AES-GCM encryption of in-memory buffers does not fail")
}

pub(crate) fn open(key: &[u8; KEY_LEN], nonce: &[u8], aad: &[u8], ct: &[u8]) -> Option<Vec<u8>> {
    if nonce.len() != NONCE_LEN {
        return None;
    }
    Aes256Gcm::new(Key::<Aes256Gcm>::from_slice(key))
        .decrypt(Nonce::from_slice(nonce), Payload { msg: ct, aad })
        .ok()
}

/// Writes `bytes` to `path` through a sibling temp file and a rename, so
/// readers only ever see complete files.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let tmp = path.with_extension(format!("tmp{}", std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)
}

/// An opened store directory.
#[derive(Debug)]
pub struct Store {
    dir: PathBuf,
    keyset: Keyset,
    prefs: PrefStore,
}

impl Store {
    pub fn keyset_path(dir: &Path) -> PathBuf {
        dir.join(KEYSET_FILE)
    }

    pub fn prefs_path(dir: &Path) -> PathBuf {
        dir.join(PREFS_FILE)
    }

    pub fn exists(dir: &Path) -> bool {
        Self::keyset_path(dir).is_file()
    }

    /// Creates a new store with a fresh KDF salt and keyset.
    pub fn init(dir: &Path, passphrase: &str, params: KdfParams) -> Result<Self, StoreError> {
        if Self::exists(dir) {
            return Err(StoreError::Exists(dir.to_path_buf()));
        }
        let salt = fresh_salt();
        let master = derive_master_key(passphrase, &salt, params)?;
        let wrapped = create_keyset(&master);
        let keyset = open_keyset(&master, &wrapped)?;
        fs::create_dir_all(dir)?;
        write_atomic(
            &Self::keyset_path(dir),
            &encode_keyset_file(&salt, params, &wrapped),
        )?;
        let prefs = PrefStore::new();
        prefs.save(&Self::prefs_path(dir), &keyset)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            keyset,
            prefs,
        })
    }

    /// Opens an existing store; a wrong passphrase is an authentication error.
    pub fn open(dir: &Path, passphrase: &str) -> Result<Self, StoreError> {
        let bytes = fs::read(Self::keyset_path(dir))?;
        let (salt, params, wrapped) = decode_keyset_file(&bytes)?;
        let master = derive_master_key(passphrase, &salt, params)?;
        let keyset = open_keyset(&master, &wrapped)?;
        let prefs = PrefStore::load(&Self::prefs_path(dir), &keyset)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            keyset,
            prefs,
        })
    }

    pub fn open_or_init(dir: &Path, passphrase: &str) -> Result<Self, StoreError> {
        if Self::exists(dir) {
            Self::open(dir, passphrase)
        } else {
            Self::init(dir, passphrase, KdfParams::default())
        }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn keyset(&self) -> &Keyset {
        &self.keyset
    }

    pub fn prefs(&self) -> &PrefStore {
        &self.prefs
    }

    pub fn get(&self, name: &str) -> Result<Vec<u8>, StoreError> {
        self.prefs.get(&self.keyset, name)
    }

    /// Stores a preference and persists the preference file.
    pub fn put(&mut self, name: &str, value: &[u8]) -> Result<(), StoreError> {
        self.prefs.put(&self.keyset, name, value);
        self.prefs.save(&Self::prefs_path(&self.dir), &self.keyset)
    }
}

fn keyset_file_prefix(salt: &[u8; SALT_LEN], params: KdfParams) -> Vec<u8> {
    let mut out = Vec::with_capacity(4 + 1 + SALT_LEN + 4);
    out.extend_from_slice(KEYSET_FILE_MAGIC);
    out.push(KEYSET_FILE_VERSION);
    out.extend_from_slice(salt);
    out.extend_from_slice(&params.iterations.to_be_bytes());
    out
}

/// `DDSK | version | kdf salt (16) | iterations (u32 BE) | wrapped keyset`.
pub fn encode_keyset_file(
    salt: &[u8; SALT_LEN],
    params: KdfParams,
    wrapped: &WrappedKeyset,
) -> Vec<u8> {
    let mut out = keyset_file_prefix(salt, params);
    out.extend_from_slice(&wrapped.to_bytes());
    out
}

pub fn decode_keyset_file(
    bytes: &[u8],
) -> Result<([u8; SALT_LEN], KdfParams, WrappedKeyset), StoreError> {
    let bad = StoreError::Auth(AuthFailure::Keyset);
    let prefix_len = 4 + 1 + SALT_LEN + 4;
    if bytes.len() < prefix_len
        || &bytes[..4] != KEYSET_FILE_MAGIC
        || bytes[4] != KEYSET_FILE_VERSION
    {
        return Err(bad);
    }
    let salt: [u8; SALT_LEN] = bytes[5..5 + SALT_LEN].try_into().expect("length checked");
    let iterations = u32::from_be_bytes(
        bytes[5 + SALT_LEN..prefix_len]
            .try_into()
            .expect("length checked"),
    );
    let wrapped = WrappedKeyset::from_bytes(&bytes[prefix_len..]).ok_or(bad)?;
    Ok((salt, KdfParams { iterations }, wrapped))
}
