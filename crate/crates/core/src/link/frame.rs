//! Wire frames: `"DDSW" | version | msg_type | length (u32 BE) | payload | crc32 (u32 BE)`.
//!
//! The CRC covers `msg_type | length | payload`.

use std::fmt;

pub const MAGIC: &[u8; 4] = b"DDSW";
pub const VERSION: u8 = 0x01;
pub const HEADER_LEN: usize = 10;
pub const OVERHEAD: usize = HEADER_LEN + 4;
/// Payloads must be strictly shorter than 2^24 bytes.
pub const MAX_PAYLOAD: usize = (1 << 24) - 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum MessageType {
    Hello = 1,
    Consent = 2,
    Sample = 3,
    Alert = 4,
    Ack = 5,
    Error = 6,
}

impl MessageType {
    pub const ALL: [MessageType; 6] = [
        MessageType::Hello,
        MessageType::Consent,
        MessageType::Sample,
        MessageType::Alert,
        MessageType::Ack,
        MessageType::Error,
    ];

    pub fn from_u8(b: u8) -> Option<Self> {
        Self::ALL.into_iter().find(|t| *t as u8 == b)
    }
}

impl fmt::Display for MessageType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MessageType::Hello => "HELLO",
            MessageType::Consent => "CONSENT",
            MessageType::Sample => "SAMPLE",
            MessageType::Alert => "ALERT",
            MessageType::Ack => "ACK",
            MessageType::Error => "ERROR",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub msg_type: MessageType,
    pub payload: Vec<u8>,
}

impl Frame {
    pub fn new(msg_type: MessageType, payload: impl Into<Vec<u8>>) -> Self {
        Self {
            msg_type,
            payload: payload.into(),
        }
    }

    pub fn encode(&self) -> Result<Vec<u8>, FrameError> {
        encode_frame(self.msg_type, &self.payload)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum FrameError {
    #[error("bad magic")]
    BadMagic,
    #[error("unsupported version {0:#04x}")]
    BadVersion(u8),
    #[error("crc mismatch: frame says {expected:#010x}, computed {actual:#010x}")]
    BadCrc { expected: u32, actual: u32 },
    #[error("payload of {0} bytes exceeds limit")]
    Oversize(usize),
    #[error("unknown message type {0}")]
    UnknownType(u8),
}

fn crc_of(msg_type: u8, len: [u8; 4], payload: &[u8]) -> u32 {
    let mut h = crc32fast::Hasher::new();
    h.update(&[msg_type]);
    h.update(&len);
    h.update(payload);
    h.finalize()
}

pub fn encode_frame(msg_type: MessageType, payload: &[u8]) -> Result<Vec<u8>, FrameError> {
    if payload.len() > MAX_PAYLOAD {
        return Err(FrameError::Oversize(payload.len()));
    }
    let len = (payload.len() as u32).to_be_bytes();
    let mut out = Vec::with_capacity(OVERHEAD + payload.len());
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.push(msg_type as u8);
    out.extend_from_slice(&len);
    out.extend_from_slice(payload);
    out.extend_from_slice(&crc_of(msg_type as u8, len, payload).to_be_bytes());
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Decoded {
    /// A complete frame and the number of bytes it used.
    Frame(Frame, usize),
    NeedMoreData,
}

/// Decodes one frame from the front of `bytes`.
///
/// Errors are reported as soon as the bytes seen so far prove them, so a
/// corrupt magic is caught on its first byte.
pub fn decode_frame(bytes: &[u8]) -> Result<Decoded, FrameError> {
    let m = bytes.len().min(4);
    if bytes[..m] != MAGIC[..m] {
        return Err(FrameError::BadMagic);
    }
    if let Some(&v) = bytes.get(4) {
        if v != VERSION {
            return Err(FrameError::BadVersion(v));
        }
    }
    if bytes.len() < HEADER_LEN {
        return Ok(Decoded::NeedMoreData);
    }
    let len_bytes: [u8; 4] = bytes[6..10].try_into().expect("length checked");
    let len = u32::from_be_bytes(len_bytes) as usize;
    if len > MAX_PAYLOAD {
        return Err(FrameError::Oversize(len));
    }
    let total = OVERHEAD + len;
    if bytes.len() < total {
        return Ok(Decoded::NeedMoreData);
    }
    let payload = &bytes[HEADER_LEN..HEADER_LEN + len];
    let expected = u32::from_be_bytes(
        bytes[HEADER_LEN + len..total]
            .try_into()
            .expect("length checked"),
    );
    let actual = crc_of(bytes[5], len_bytes, payload);
    if expected != actual {
        return Err(FrameError::BadCrc { expected, actual });
    }
    let msg_type = MessageType::from_u8(bytes[5]).ok_or(FrameError::UnknownType(bytes[5]))?;
    Ok(Decoded::Frame(Frame::new(msg_type, payload), total))
}

/// Buffers a byte stream and yields whole frames.
#[derive(Debug, Default)]
pub struct FrameDecoder {
    buf: Vec<u8>,
}

impl FrameDecoder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, bytes: &[u8]) {
        self.buf.extend_from_slice(bytes);
    }

    pub fn buffered(&self) -> usize {
        self.buf.len()
    }

    /// Next complete frame, `None` if more bytes are needed.
    pub fn next_frame(&mut self) -> Result<Option<Frame>, FrameError> {
        match decode_frame(&self.buf)? {
            Decoded::Frame(f, used) => {
                self.buf.drain(..used);
                Ok(Some(f))
            }
            Decoded::NeedMoreData => Ok(None),
        }
    }
}
