use std::fmt;

use sha2::Sha256;
use zeroize::{Zeroize, ZeroizeOnDrop};

use super::{StoreError, KEY_LEN, SALT_LEN};

/// PBKDF2-HMAC-SHA256 iteration floor.
pub const MIN_ITERATIONS: u32 = 10_000;
pub const DEFAULT_ITERATIONS: u32 = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KdfParams {
    pub iterations: u32,
}

impl Default for KdfParams {
    fn default() -> Self {
        Self {
            iterations: DEFAULT_ITERATIONS,
        }
    }
}

/// 256-bit key-encryption key. Never written anywhere; wiped on drop.
#[derive(Clone, Zeroize, ZeroizeOnDrop)]
pub struct MasterKey([u8; KEY_LEN]);

impl MasterKey {
    pub(crate) fn bytes(&self) -> &[u8; KEY_LEN] {
        &self.0
    }
}

impl PartialEq for MasterKey {
    fn eq(&self, other: &Self) -> bool {
        self.0
            .iter()
            .zip(other.0.iter())
            .fold(0u8, |acc, (a, b)| acc | (a ^ b))
            == 0
    }
}

impl fmt::Debug for MasterKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("MasterKey(..)")
    }
}

pub fn derive_master_key(
    passphrase: &str,
    salt: &[u8; SALT_LEN],
    params: KdfParams,
) -> Result<MasterKey, StoreError> {
    if params.iterations < MIN_ITERATIONS {
        return Err(StoreError::WeakParams {
            iterations: params.iterations,
            minimum: MIN_ITERATIONS,
        });
    }
    let mut key = [0u8; KEY_LEN];
    pbkdf2::pbkdf2_hmac::<Sha256>(passphrase.as_bytes(), salt, params.iterations, &mut key);
    let master = MasterKey(key);
    key.zeroize();
    Ok(master)
}
