//! Length-prefixed binary framing.
//!
//! Every message is `RMTS | version u8 | type u8 | body length u32 | body`,
//! big-endian throughout. Reals travel as 32-bit IEEE-754 values.

use thiserror::Error;

use crate::geometry::{AffineTransform, BBox, Detection, FrameInput};
use crate::tracker::TrackOutput;

pub const MAGIC: [u8; 4] = *b"RMTS";
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 10;
/// Largest encoded message, header included.
pub const MAX_MESSAGE_LEN: usize = 16 * 1024 * 1024;

/// Reserved for raw image payloads; never valid on the wire.
pub const RESERVED_PIXEL_FRAME: u8 = 9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum MessageType {
    Hello = 1,
    StreamOpen = 2,
    Frame = 3,
    StreamClose = 4,
    Ack = 5,
    TrackResult = 6,
    Error = 7,
    Heartbeat = 8,
}

impl MessageType {
    fn from_code(code: u8) -> Result<Self, ProtocolError> {
        Ok(match code {
            1 => Self::Hello,
            2 => Self::StreamOpen,
            3 => Self::Frame,
            4 => Self::StreamClose,
            5 => Self::Ack,
            6 => Self::TrackResult,
            7 => Self::Error,
            8 => Self::Heartbeat,
            RESERVED_PIXEL_FRAME => return Err(ProtocolError::ReservedType(code)),
            other => return Err(ProtocolError::UnknownType(other)),
        })
    }
}

/// Reason carried by an ERROR message.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u16)]
pub enum ErrorCode {
    /// Frames `missing_from..=missing_to` never arrived within the reorder window.
    Gap = 1,
    InvalidInput = 2,
    Protocol = 3,
    Internal = 4,
}

impl ErrorCode {
    fn from_code(code: u16) -> Result<Self, ProtocolError> {
        Ok(match code {
            1 => Self::Gap,
            2 => Self::InvalidInput,
            3 => Self::Protocol,
            4 => Self::Internal,
            other => return Err(ProtocolError::Malformed(format!("unknown error code {other}"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Message {
    Hello {
        client: String,
    },
    /// From a producer, `resume_from` is 0. The server answers with the last
    /// frame it has processed for the stream (0 for a fresh stream).
    StreamOpen {
        stream_id: u32,
        resume_from: u64,
    },
    Frame(FrameInput),
    StreamClose {
        stream_id: u32,
        last_frame: u64,
    },
    Ack {
        stream_id: u32,
        frame_no: u64,
    },
    TrackResult {
        stream_id: u32,
        frame_no: u64,
        tracks: Vec<TrackOutput>,
    },
    Error {
        stream_id: u32,
        code: ErrorCode,
        missing_from: u64,
        missing_to: u64,
        message: String,
    },
    Heartbeat,
}

impl Message {
    pub fn message_type(&self) -> MessageType {
        match self {
            Self::Hello { .. } => MessageType::Hello,
            Self::StreamOpen { .. } => MessageType::StreamOpen,
            Self::Frame(_) => MessageType::Frame,
            Self::StreamClose { .. } => MessageType::StreamClose,
            Self::Ack { .. } => MessageType::Ack,
            Self::TrackResult { .. } => MessageType::TrackResult,
            Self::Error { .. } => MessageType::Error,
            Self::Heartbeat => MessageType::Heartbeat,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EncodeError {
    #[error("encoded message would be {0} bytes, over the {MAX_MESSAGE_LEN}-byte cap")]
    TooLarge(usize),
    #[error("{what} count {count} does not fit in 16 bits")]
    TooMany { what: &'static str, count: usize },
    #[error("frame numbers start at 1")]
    ZeroFrame,
}

/// Connection-fatal decoding failures.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProtocolError {
    #[error("bad magic {0:02x?}")]
    BadMagic([u8; 4]),
    #[error("unsupported protocol version {0}")]
    UnsupportedVersion(u8),
    #[error("unknown message type {0}")]
    UnknownType(u8),
    #[error("message type {0} is reserved")]
    ReservedType(u8),
    #[error("declared message length {0} exceeds the cap")]
    TooLarge(usize),
    #[error("malformed body: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DecodeError {
    /// At least this many more bytes are needed before anything can be decided.
    #[error("need {0} more bytes")]
    Incomplete(usize),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
}

struct Out(Vec<u8>);

impl Out {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u16(&mut self, v: u16) {
        self.0.extend_from_slice(&v.to_be_bytes());
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_be_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_be_bytes());
    }
    fn f32(&mut self, v: f64) {
        self.0.extend_from_slice(&(v as f32).to_be_bytes());
    }
    fn count(&mut self, what: &'static str, n: usize) -> Result<(), EncodeError> {
        let v = u16::try_from(n).map_err(|_| EncodeError::TooMany { what, count: n })?;
        self.u16(v);
        Ok(())
    }
    fn text(&mut self, s: &str) -> Result<(), EncodeError> {
        self.count("text byte", s.len())?;
        self.0.extend_from_slice(s.as_bytes());
        Ok(())
    }
    fn bbox(&mut self, b: &BBox) {
        self.f32(b.left);
        self.f32(b.top);
        self.f32(b.width);
        self.f32(b.height);
    }
}

/// Serializes a message. Reals are narrowed to `f32`.
pub fn encode_message(m: &Message) -> Result<Vec<u8>, EncodeError> {
    let mut o = Out(Vec::with_capacity(64));
    o.0.extend_from_slice(&MAGIC);
    o.u8(VERSION);
    o.u8(m.message_type() as u8);
    o.u32(0);
    match m {
        Message::Hello { client } => o.text(client)?,
        Message::StreamOpen { stream_id, resume_from } => {
            o.u32(*stream_id);
            o.u64(*resume_from);
        }
        Message::Frame(f) => {
            if f.frame_no == 0 {
                return Err(EncodeError::ZeroFrame);
            }
            o.u32(f.stream_id);
            o.u64(f.frame_no);
            o.count("detection", f.detections.len())?;
            for d in &f.detections {
                o.bbox(&d.bbox);
                o.f32(d.score);
                o.u16(d.class_id);
                let emb = d.embedding.as_deref().unwrap_or(&[]);
                o.count("embedding value", emb.len())?;
                for v in emb {
                    o.f32(*v);
                }
            }
            match &f.camera_motion {
                None => o.u8(0),
                Some(t) => {
                    o.u8(1);
                    for v in [t.linear[0][0], t.linear[0][1], t.linear[1][0], t.linear[1][1]] {
                        o.f32(v);
                    }
                    o.f32(t.translation[0]);
                    o.f32(t.translation[1]);
                }
            }
        }
        Message::StreamClose { stream_id, last_frame } => {
            o.u32(*stream_id);
            o.u64(*last_frame);
        }
        Message::Ack { stream_id, frame_no } => {
            if *frame_no == 0 {
                return Err(EncodeError::ZeroFrame);
            }
            o.u32(*stream_id);
            o.u64(*frame_no);
        }
        Message::TrackResult {
            stream_id,
            frame_no,
            tracks,
        } => {
            if *frame_no == 0 {
                return Err(EncodeError::ZeroFrame);
            }
            o.u32(*stream_id);
            o.u64(*frame_no);
            o.count("track", tracks.len())?;
            for t in tracks {
                o.u32(t.track_id);
                o.bbox(&t.bbox);
                o.f32(t.score);
                o.u16(t.class_id);
            }
        }
        Message::Error {
            stream_id,
            code,
            missing_from,
            missing_to,
            message,
        } => {
            o.u32(*stream_id);
            o.u16(*code as u16);
            o.u64(*missing_from);
            o.u64(*missing_to);
            o.text(message)?;
        }
        Message::Heartbeat => {}
    }
    let total = o.0.len();
    if total > MAX_MESSAGE_LEN {
        return Err(EncodeError::TooLarge(total));
    }
    let body_len = (total - HEADER_LEN) as u32;
    o.0[6..10].copy_from_slice(&body_len.to_be_bytes());
    Ok(o.0)
}

struct In<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> In<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ProtocolError> {
        if self.buf.len() - self.pos < n {
            return Err(ProtocolError::Malformed("body shorter than its contents".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8, ProtocolError> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> Result<u16, ProtocolError> {
        Ok(u16::from_be_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }
    fn u32(&mut self) -> Result<u32, ProtocolError> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
    fn u64(&mut self) -> Result<u64, ProtocolError> {
        Ok(u64::from_be_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn f32(&mut self) -> Result<f64, ProtocolError> {
        Ok(f64::from(f32::from_be_bytes(self.take(4)?.try_into().expect("4 bytes"))))
    }
    fn frame_no(&mut self) -> Result<u64, ProtocolError> {
        match self.u64()? {
            0 => Err(ProtocolError::Malformed("frame number 0".into())),
            f => Ok(f),
        }
    }
    fn text(&mut self) -> Result<String, ProtocolError> {
        let n = self.u16()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| ProtocolError::Malformed("text is not UTF-8".into()))
    }
    fn bbox(&mut self) -> Result<BBox, ProtocolError> {
        Ok(BBox::new(self.f32()?, self.f32()?, self.f32()?, self.f32()?))
    }
}

/// Checks the fixed header and returns the message type and body length.
fn header(bytes: &[u8]) -> Result<(MessageType, usize), DecodeError> {
    let have = bytes.len().min(HEADER_LEN);
    // Reject a bad prefix as soon as it is visible.
    if bytes[..have.min(4)] != MAGIC[..have.min(4)] {
        let mut m = [0u8; 4];
        m[..have.min(4)].copy_from_slice(&bytes[..have.min(4)]);
        return Err(ProtocolError::BadMagic(m).into());
    }
    if have >= 5 && bytes[4] != VERSION {
        return Err(ProtocolError::UnsupportedVersion(bytes[4]).into());
    }
    if have >= 6 {
        MessageType::from_code(bytes[5])?;
    }
    if have < HEADER_LEN {
        return Err(DecodeError::Incomplete(HEADER_LEN - have));
    }
    let kind = MessageType::from_code(bytes[5])?;
    let len = u32::from_be_bytes(bytes[6..10].try_into().expect("4 bytes")) as usize;
    if HEADER_LEN + len > MAX_MESSAGE_LEN {
        return Err(ProtocolError::TooLarge(HEADER_LEN + len).into());
    }
    Ok((kind, len))
}

/// Decodes one message from the front of `bytes`, returning it with the
/// number of bytes consumed. Bytes past the declared length are left alone.
pub fn decode_message(bytes: &[u8]) -> Result<(Message, usize), DecodeError> {
    let (kind, len) = header(bytes)?;
    let total = HEADER_LEN + len;
    if bytes.len() < total {
        return Err(DecodeError::Incomplete(total - bytes.len()));
    }
    let mut r = In {
        buf: &bytes[HEADER_LEN..total],
        pos: 0,
    };
    let m = match kind {
        MessageType::Hello => Message::Hello { client: r.text()? },
        MessageType::StreamOpen => Message::StreamOpen {
            stream_id: r.u32()?,
            resume_from: r.u64()?,
        },
        MessageType::Frame => {
            let stream_id = r.u32()?;
            let frame_no = r.frame_no()?;
            let n = r.u16()? as usize;
            let mut detections = Vec::with_capacity(n.min(len / 24));
            for _ in 0..n {
                let bbox = r.bbox()?;
                let score = r.f32()?;
                let class_id = r.u16()?;
                let dim = r.u16()? as usize;
                let mut d = Detection::new(bbox, score, class_id);
                if dim > 0 {
                    d.embedding = Some((0..dim).map(|_| r.f32()).collect::<Result<_, _>>()?);
                }
                detections.push(d);
            }
            let mut f = FrameInput::new(stream_id, frame_no, detections);
            match r.u8()? {
                0 => {}
                1 => {
                    let v: Vec<f64> = (0..6).map(|_| r.f32()).collect::<Result<_, _>>()?;
                    f.camera_motion = Some(AffineTransform {
                        linear: [[v[0], v[1]], [v[2], v[3]]],
                        translation: [v[4], v[5]],
                    });
                }
                other => return Err(ProtocolError::Malformed(format!("camera-motion flag {other}")).into()),
            }
            Message::Frame(f)
        }
        MessageType::StreamClose => Message::StreamClose {
            stream_id: r.u32()?,
            last_frame: r.u64()?,
        },
        MessageType::Ack => Message::Ack {
            stream_id: r.u32()?,
            frame_no: r.frame_no()?,
        },
        MessageType::TrackResult => {
            let stream_id = r.u32()?;
            let frame_no = r.frame_no()?;
            let n = r.u16()? as usize;
            let mut tracks = Vec::with_capacity(n.min(len / 26));
            for _ in 0..n {
                tracks.push(TrackOutput {
                    track_id: r.u32()?,
                    bbox: r.bbox()?,
                    score: r.f32()?,
                    class_id: r.u16()?,
                });
            }
            Message::TrackResult {
                stream_id,
                frame_no,
                tracks,
            }
        }
        MessageType::Error => Message::Error {
            stream_id: r.u32()?,
            code: ErrorCode::from_code(r.u16()?)?,
            missing_from: r.u64()?,
            missing_to: r.u64()?,
            message: r.text()?,
        },
        MessageType::Heartbeat => Message::Heartbeat,
    };
    if r.pos != len {
        return Err(ProtocolError::Malformed(format!("{} unused body bytes", len - r.pos)).into());
    }
    Ok((m, total))
}

/// Incremental decoder for a byte stream.
#[derive(Debug, Default)]
pub struct Decoder {
    buf: Vec<u8>,
    /// Start of the undecoded bytes in `buf`.
    start: usize,
}

impl Decoder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn feed(&mut self, bytes: &[u8]) {
        if self.start > 0 && self.start >= self.buf.len() / 2 {
            self.buf.drain(..self.start);
            self.start = 0;
        }
        self.buf.extend_from_slice(bytes);
    }

    /// The next complete message, or `None` when more bytes are needed.
    pub fn next_message(&mut self) -> Result<Option<Message>, ProtocolError> {
        if self.start == self.buf.len() {
            return Ok(None);
        }
        match decode_message(&self.buf[self.start..]) {
            Ok((m, used)) => {
                self.start += used;
                if self.start == self.buf.len() {
                    self.buf.clear();
                    self.start = 0;
                }
                Ok(Some(m))
            }
            Err(DecodeError::Incomplete(_)) => Ok(None),
            Err(DecodeError::Protocol(e)) => Err(e),
        }
    }

    /// Bytes received but not yet decoded.
    pub fn buffered(&self) -> usize {
        self.buf.len() - self.start
    }
}
