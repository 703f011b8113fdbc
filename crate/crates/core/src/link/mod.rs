//! Watch to phone link: framed messages over a byte stream, gated by an
//! explicit consent grant.
//!
//! The watch ([`WatchClient`]) says HELLO, sends its CONSENT grant, then
//! streams SAMPLE frames. The phone ([`PhoneSession`]) acknowledges, drops
//! samples whose kind was not granted for reading, and optionally runs the
//! detection pipeline, answering with ALERT frames.

use std::collections::BTreeSet;
use std::fmt;

use crate::pipeline::Pipeline;
use crate::sensor::{SensorKind, SensorSample};

mod frame;
mod transport;

pub use frame::{
    decode_frame, encode_frame, Decoded, Frame, FrameDecoder, FrameError, MessageType, HEADER_LEN,
    MAGIC, MAX_PAYLOAD, OVERHEAD, VERSION,
};
pub use transport::{Loopback, SealedChannel, SealedLoopback, Transport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Direction {
    Read = 1,
    Write = 2,
}

impl Direction {
    fn from_u8(b: u8) -> Option<Self> {
        match b {
            1 => Some(Direction::Read),
            2 => Some(Direction::Write),
            _ => None,
        }
    }
}

/// Which sensor kinds may be read or written during one session.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ConsentGrant {
    scopes: BTreeSet<(SensorKind, Direction)>,
}

impl ConsentGrant {
    pub fn new(scopes: impl IntoIterator<Item = (SensorKind, Direction)>) -> Self {
        Self {
            scopes: scopes.into_iter().collect(),
        }
    }

    pub fn read_only(kinds: impl IntoIterator<Item = SensorKind>) -> Self {
        Self::new(kinds.into_iter().map(|k| (k, Direction::Read)))
    }

    pub fn allows(&self, kind: SensorKind, dir: Direction) -> bool {
        self.scopes.contains(&(kind, dir))
    }

    pub fn scopes(&self) -> impl Iterator<Item = &(SensorKind, Direction)> {
        self.scopes.iter()
    }

    /// `count | (kind code, direction)*`.
    pub fn encode(&self) -> Vec<u8> {
        let mut out = vec![self.scopes.len() as u8];
        for (k, d) in &self.scopes {
            out.push(k.code());
            out.push(*d as u8);
        }
        out
    }

    pub fn decode(b: &[u8]) -> Option<Self> {
        let (&count, pairs) = b.split_first()?;
        if pairs.len() != 2 * count as usize {
            return None;
        }
        let scopes = pairs
            .chunks_exact(2)
            .map(|p| Some((SensorKind::from_code(p[0])?, Direction::from_u8(p[1])?)))
            .collect::<Option<BTreeSet<_>>>()?;
        Some(Self { scopes })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SessionState {
    AwaitingHello,
    AwaitingConsent,
    Established,
    Closed,
}

/// First byte of an ERROR payload.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCode {
    Protocol = 1,
    Consent = 2,
    Framing = 3,
    Malformed = 4,
}

impl ErrorCode {
    pub fn from_u8(b: u8) -> Option<Self> {
        [
            ErrorCode::Protocol,
            ErrorCode::Consent,
            ErrorCode::Framing,
            ErrorCode::Malformed,
        ]
        .into_iter()
        .find(|c| *c as u8 == b)
    }

    /// Whether the sender closes the session after this error.
    pub fn closes(self) -> bool {
        self != ErrorCode::Consent
    }
}

impl fmt::Display for ErrorCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ErrorCode::Protocol => "protocol",
            ErrorCode::Consent => "consent",
            ErrorCode::Framing => "framing",
            ErrorCode::Malformed => "malformed",
        })
    }
}

pub fn error_frame(code: ErrorCode, msg: &str) -> Frame {
    let mut p = vec![code as u8];
    p.extend_from_slice(msg.as_bytes());
    Frame::new(MessageType::Error, p)
}

pub fn parse_error_payload(p: &[u8]) -> (Option<ErrorCode>, String) {
    match p.split_first() {
        Some((&c, msg)) => (
            ErrorCode::from_u8(c),
            String::from_utf8_lossy(msg).into_owned(),
        ),
        None => (None, String::new()),
    }
}

#[derive(Debug, thiserror::Error)]
pub enum LinkError {
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("consent not granted: {0}")]
    Consent(String),
    #[error("session closed")]
    ClosedSession,
    #[error(transparent)]
    Frame(#[from] FrameError),
    #[error("transport: {0}")]
    Transport(String),
}

/// Receiving (phone) end of one session.
#[derive(Debug)]
pub struct PhoneSession {
    state: SessionState,
    decoder: FrameDecoder,
    consent: Option<ConsentGrant>,
    delivered: Vec<SensorSample>,
    refused: usize,
    pipeline: Option<Pipeline<f64>>,
}

impl Default for PhoneSession {
    fn default() -> Self {
        Self::new()
    }
}

impl PhoneSession {
    pub fn new() -> Self {
        Self {
            state: SessionState::AwaitingHello,
            decoder: FrameDecoder::new(),
            consent: None,
            delivered: Vec::new(),
            refused: 0,
            pipeline: None,
        }
    }

    /// A session that scores delivered samples and answers with ALERT frames.
    pub fn with_pipeline(pipeline: Pipeline<f64>) -> Self {
        Self {
            pipeline: Some(pipeline),
            ..Self::new()
        }
    }

    pub fn state(&self) -> SessionState {
        self.state
    }

    pub fn consent(&self) -> Option<&ConsentGrant> {
        self.consent.as_ref()
    }

    pub fn delivered(&self) -> &[SensorSample] {
        &self.delivered
    }

    pub fn refused(&self) -> usize {
        self.refused
    }

    pub fn pipeline(&self) -> Option<&Pipeline<f64>> {
        self.pipeline.as_ref()
    }

    pub fn into_pipeline(self) -> Option<Pipeline<f64>> {
        self.pipeline
    }

    /// Consumes incoming bytes; returns the frames to send back.
    pub fn on_bytes(&mut self, bytes: &[u8]) -> Vec<Frame> {
        let mut replies = Vec::new();
        if self.state == SessionState::Closed {
            return replies;
        }
        self.decoder.push(bytes);
        loop {
            match self.decoder.next_frame() {
                Ok(Some(f)) => {
                    self.on_frame(f, &mut replies);
                    if self.state == SessionState::Closed {
                        break;
                    }
                }
                Ok(None) => break,
                Err(e) => {
                    // no resynchronisation: a corrupt stream ends the session
                    replies.push(error_frame(ErrorCode::Framing, &e.to_string()));
                    self.state = SessionState::Closed;
                    break;
                }
            }
        }
        replies
    }

    fn fail(&mut self, code: ErrorCode, msg: String, replies: &mut Vec<Frame>) {
        replies.push(error_frame(code, &msg));
        if code.closes() {
            self.state = SessionState::Closed;
        }
    }

    fn on_frame(&mut self, f: Frame, replies: &mut Vec<Frame>) {
        use MessageType as M;
        use SessionState as S;
        match (self.state, f.msg_type) {
            (S::AwaitingHello, M::Hello) => {
                self.state = S::AwaitingConsent;
                replies.push(Frame::new(M::Ack, Vec::new()));
            }
            (S::AwaitingConsent, M::Consent) => match ConsentGrant::decode(&f.payload) {
                Some(grant) => {
                    self.consent = Some(grant);
                    self.state = S::Established;
                    replies.push(Frame::new(M::Ack, Vec::new()));
                }
                None => self.fail(ErrorCode::Malformed, "bad consent payload".into(), replies),
            },
            (S::Established, M::Sample) => self.on_sample(&f.payload, replies),
            (_, M::Ack) => {}
            (_, M::Error) => self.state = S::Closed,
            (state, ty) => self.fail(
                ErrorCode::Protocol,
                format!("{ty} not allowed in state {state:?}"),
                replies,
            ),
        }
    }

    fn on_sample(&mut self, payload: &[u8], replies: &mut Vec<Frame>) {
        let sample: SensorSample = match serde_json::from_slice(payload) {
            Ok(s) => s,
            Err(e) => return self.fail(ErrorCode::Malformed, format!("sample: {e}"), replies),
        };
        let granted = self
            .consent
            .as_ref()
            .is_some_and(|c| c.allows(sample.kind(), Direction::Read));
        if !granted {
            self.refused += 1;
            return self.fail(
                ErrorCode::Consent,
                format!("{} not granted for READ", sample.kind().tag()),
                replies,
            );
        }
        self.delivered.push(sample);
        replies.push(Frame::new(MessageType::Ack, Vec::new()));
        if let Some(p) = self.pipeline.as_mut() {
            match p.push(&sample) {
                Ok(alerts) => {
                    for a in alerts {
                        let line =
                            serde_json::to_vec(&a.log_line()).expect("alert lines serialize");
                        replies.push(Frame::new(MessageType::Alert, line));
                    }
                }
                Err(e) => self.fail(ErrorCode::Protocol, format!("pipeline: {e}"), replies),
            }
        }
    }
}

/// Sending (watch) end of one session.
#[derive(Debug)]
pub struct WatchClient<Tr> {
    transport: Tr,
    decoder: FrameDecoder,
    closed: bool,
    alerts: Vec<Vec<u8>>,
}

impl<Tr: Transport> WatchClient<Tr> {
    pub fn new(transport: Tr) -> Self {
        Self {
            transport,
            decoder: FrameDecoder::new(),
            closed: false,
            alerts: Vec::new(),
        }
    }

    pub fn transport(&self) -> &Tr {
        &self.transport
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    /// ALERT payloads received so far (alert-log JSON lines).
    pub fn alerts(&self) -> &[Vec<u8>] {
        &self.alerts
    }

    /// Sends one frame and waits for its ACK or ERROR.
    pub fn request(&mut self, frame: &Frame) -> Result<(), LinkError> {
        self.request_raw(&frame.encode()?)
    }

    /// Sends raw bytes (possibly malformed) and interprets the reply.
    pub fn request_raw(&mut self, bytes: &[u8]) -> Result<(), LinkError> {
        if self.closed {
            return Err(LinkError::ClosedSession);
        }
        let reply = self.transport.exchange(bytes)?;
        self.decoder.push(&reply);
        let mut outcome = None;
        while let Some(f) = self.decoder.next_frame()? {
            match f.msg_type {
                MessageType::Ack => {
                    outcome.get_or_insert(Ok(()));
                }
                MessageType::Alert => self.alerts.push(f.payload),
                MessageType::Error => {
                    let (code, msg) = parse_error_payload(&f.payload);
                    let code = code.unwrap_or(ErrorCode::Protocol);
                    if code.closes() {
                        self.closed = true;
                    }
                    outcome = Some(Err(match code {
                        ErrorCode::Consent => LinkError::Consent(msg),
                        _ => LinkError::Protocol(format!("{code}: {msg}")),
                    }));
                }
                other => {
                    self.closed = true;
                    outcome = Some(Err(LinkError::Protocol(format!(
                        "unexpected {other} from phone"
                    ))));
                }
            }
        }
        outcome.unwrap_or_else(|| {
            self.closed = true;
            Err(LinkError::ClosedSession)
        })
    }

    pub fn hello(&mut self) -> Result<(), LinkError> {
        self.request(&Frame::new(MessageType::Hello, b"dds-watch/1".to_vec()))
    }

    /// HELLO then CONSENT; the grant is fixed for the rest of the session.
    pub fn handshake(&mut self, consent: &ConsentGrant) -> Result<(), LinkError> {
        self.hello()?;
        self.request(&Frame::new(MessageType::Consent, consent.encode()))
    }

    /// Sends one sample as its replay-file JSON line.
    pub fn send_sample(&mut self, sample: &SensorSample) -> Result<(), LinkError> {
        self.request(&Frame::new(
            MessageType::Sample,
            sample.to_json_line().into_bytes(),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sensor::{SensorPayload, Timestamp};

    fn beat() -> SensorSample {
        SensorSample::new(Timestamp(10), 1, SensorPayload::HeartBeat { ibi_ms: 812.0 })
    }

    fn loc() -> SensorSample {
        SensorSample::new(
            Timestamp(20),
            1,
            SensorPayload::Location {
                lat: 1.0,
                lon: 2.0,
                speed: 3.0,
            },
        )
    }

    fn client() -> WatchClient<Loopback> {
        WatchClient::new(Loopback::new(PhoneSession::new()))
    }

    #[test]
    fn consent_codec() {
        let g = ConsentGrant::new([
            (SensorKind::HeartBeat, Direction::Read),
            (SensorKind::Accel, Direction::Write),
        ]);
        let enc = g.encode();
        assert_eq!(enc[0], 2);
        assert_eq!(ConsentGrant::decode(&enc), Some(g));
        assert_eq!(ConsentGrant::decode(&[1, 4]), None);
        assert_eq!(ConsentGrant::decode(&[1, 99, 1]), None);
        assert_eq!(ConsentGrant::decode(&[]), None);
    }

    #[test]
    fn happy_path_establishes() {
        let mut c = client();
        c.handshake(&ConsentGrant::read_only([SensorKind::HeartBeat]))
            .unwrap();
        assert_eq!(c.transport().phone().state(), SessionState::Established);
        c.send_sample(&beat()).unwrap();
        assert_eq!(c.transport().phone().delivered(), &[beat()]);
    }

    #[test]
    fn sample_before_consent_closes() {
        let mut c = client();
        c.hello().unwrap();
        assert!(matches!(
            c.send_sample(&beat()),
            Err(LinkError::Protocol(_))
        ));
        assert_eq!(c.transport().phone().state(), SessionState::Closed);
        assert!(matches!(
            c.send_sample(&beat()),
            Err(LinkError::ClosedSession)
        ));
    }

    #[test]
    fn sample_before_hello_closes() {
        let mut c = client();
        assert!(c.send_sample(&beat()).is_err());
        assert_eq!(c.transport().phone().state(), SessionState::Closed);
    }

    #[test]
    fn duplicate_hello_is_protocol_error() {
        let mut c = client();
        c.hello().unwrap();
        assert!(matches!(c.hello(), Err(LinkError::Protocol(_))));
    }

    #[test]
    fn ungranted_kind_refused_session_stays_open() {
        let mut c = client();
        c.handshake(&ConsentGrant::read_only([SensorKind::HeartBeat]))
            .unwrap();
        assert!(matches!(c.send_sample(&loc()), Err(LinkError::Consent(_))));
        assert_eq!(c.transport().phone().state(), SessionState::Established);
        c.send_sample(&beat()).unwrap();
        assert_eq!(c.transport().phone().delivered().len(), 1);
        assert_eq!(c.transport().phone().refused(), 1);
    }

    #[test]
    fn write_scope_does_not_grant_read() {
        let mut c = client();
        c.handshake(&ConsentGrant::new([(
            SensorKind::HeartBeat,
            Direction::Write,
        )]))
        .unwrap();
        assert!(matches!(c.send_sample(&beat()), Err(LinkError::Consent(_))));
    }

    #[test]
    fn consent_is_immutable_once_established() {
        let mut c = client();
        c.handshake(&ConsentGrant::read_only([SensorKind::HeartBeat]))
            .unwrap();
        let wider = ConsentGrant::read_only(SensorKind::ALL);
        assert!(c
            .request(&Frame::new(MessageType::Consent, wider.encode()))
            .is_err());
        assert_eq!(
            c.transport().phone().consent(),
            Some(&ConsentGrant::read_only([SensorKind::HeartBeat]))
        );
    }

    #[test]
    fn bad_crc_closes_session() {
        let mut c = client();
        c.handshake(&ConsentGrant::read_only([SensorKind::HeartBeat]))
            .unwrap();
        let mut bytes = Frame::new(MessageType::Sample, beat().to_json_line().into_bytes())
            .encode()
            .unwrap();
        let n = bytes.len();
        bytes[n - 1] ^= 1;
        assert!(matches!(c.request_raw(&bytes), Err(LinkError::Protocol(_))));
        assert_eq!(c.transport().phone().state(), SessionState::Closed);
        assert!(c.transport().phone().delivered().is_empty());
    }

    #[test]
    fn sealed_transport_carries_session() {
        let key = [4u8; 32];
        let mut c = WatchClient::new(SealedLoopback::new(key, PhoneSession::new()));
        c.handshake(&ConsentGrant::read_only([SensorKind::HeartBeat]))
            .unwrap();
        c.send_sample(&beat()).unwrap();
        assert_eq!(c.transport().phone().delivered(), &[beat()]);
    }
}
