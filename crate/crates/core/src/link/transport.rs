//! In-process byte transports standing in for the radio link.

use crate::store::{KEY_LEN, NONCE_LEN};

use super::{LinkError, PhoneSession};

/// Request/response byte pipe: send bytes, get back whatever the peer wrote.
pub trait Transport {
    fn exchange(&mut self, out: &[u8]) -> Result<Vec<u8>, LinkError>;
}

/// Feeds bytes straight into a [`PhoneSession`].
#[derive(Debug)]
pub struct Loopback {
    phone: PhoneSession,
}

impl Loopback {
    pub fn new(phone: PhoneSession) -> Self {
        Self { phone }
    }

    pub fn phone(&self) -> &PhoneSession {
        &self.phone
    }

    pub fn into_phone(self) -> PhoneSession {
        self.phone
    }
}

fn encode_replies(phone: &mut PhoneSession, bytes: &[u8]) -> Result<Vec<u8>, LinkError> {
    let mut out = Vec::new();
    for f in phone.on_bytes(bytes) {
        out.extend(f.encode()?);
    }
    Ok(out)
}

impl Transport for Loopback {
    fn exchange(&mut self, out: &[u8]) -> Result<Vec<u8>, LinkError> {
        encode_replies(&mut self.phone, out)
    }
}

/// One direction of an AEAD-sealed stream under a pre-shared key.
///
/// Nonces are `direction byte | 0 | 0 | 0 | counter (u64 BE)`, so they never
/// repeat under one key while each side sticks to its direction byte.
#[derive(Debug, Clone)]
pub struct SealedChannel {
    key: [u8; KEY_LEN],
    direction: u8,
    sent: u64,
    received: u64,
}

impl SealedChannel {
    pub fn new(key: [u8; KEY_LEN], direction: u8) -> Self {
        Self {
            key,
            direction,
            sent: 0,
            received: 0,
        }
    }

    fn nonce(direction: u8, counter: u64) -> [u8; NONCE_LEN] {
        let mut n = [0u8; NONCE_LEN];
        n[0] = direction;
        n[4..].copy_from_slice(&counter.to_be_bytes());
        n
    }

    pub fn seal(&mut self, msg: &[u8]) -> Vec<u8> {
        let nonce = Self::nonce(self.direction, self.sent);
        self.sent += 1;
        crate::store::seal(&self.key, &nonce, b"DDSW-link", msg)
    }

    /// Opens a message sealed by the peer whose direction byte is `from`.
    pub fn open(&mut self, from: u8, ct: &[u8]) -> Result<Vec<u8>, LinkError> {
        let nonce = Self::nonce(from, self.received);
        let pt = crate::store::open(&self.key, &nonce, b"DDSW-link", ct)
            .ok_or_else(|| LinkError::Transport("sealed message failed to verify".into()))?;
        self.received += 1;
        Ok(pt)
    }
}

const WATCH_DIR: u8 = 0x57;
const PHONE_DIR: u8 = 0x50;

/// [`Loopback`] with both directions sealed under a pre-shared session key.
#[derive(Debug)]
pub struct SealedLoopback {
    watch: SealedChannel,
    phone_side: SealedChannel,
    phone: PhoneSession,
}

impl SealedLoopback {
    pub fn new(key: [u8; KEY_LEN], phone: PhoneSession) -> Self {
        Self {
            watch: SealedChannel::new(key, WATCH_DIR),
            phone_side: SealedChannel::new(key, PHONE_DIR),
            phone,
        }
    }

    pub fn phone(&self) -> &PhoneSession {
        &self.phone
    }
}

impl Transport for SealedLoopback {
    fn exchange(&mut self, out: &[u8]) -> Result<Vec<u8>, LinkError> {
        let wire = self.watch.seal(out);
        let inbound = self.phone_side.open(WATCH_DIR, &wire)?;
        let reply = encode_replies(&mut self.phone, &inbound)?;
        let wire = self.phone_side.seal(&reply);
        self.watch.open(PHONE_DIR, &wire)
    }
}
