//! Replays a sequence to a server with at-least-once delivery.

use std::collections::BTreeMap;
use std::io::{ErrorKind, Read, Write};
use std::net::TcpStream;
use std::time::{Duration, Instant};

use log::{debug, info, warn};
use serde::Serialize;
use thiserror::Error;

use super::fault::{FaultConfig, FaultyLink};
use super::wire::{encode_message, Decoder, EncodeError, ErrorCode, Message, ProtocolError};
use crate::geometry::FrameInput;
use crate::tracker::{FrameOutput, TrackOutput};

const READ_POLL: Duration = Duration::from_millis(2);

#[derive(Debug, Clone, PartialEq)]
pub struct ProducerConfig {
    pub stream_id: u32,
    /// Frames per second; 0 sends as fast as acknowledgements allow.
    pub rate: f64,
    /// Unacknowledged frames are resent after this long.
    pub ack_timeout: Duration,
    /// Largest span between the oldest unacknowledged frame and the newest
    /// sent one. Must stay below the server's reorder window.
    pub max_in_flight: u64,
    /// Reconnection attempts before giving up.
    pub max_retries: u32,
    pub retry_delay: Duration,
    /// How long to wait for the server's answer to HELLO, STREAM_OPEN and STREAM_CLOSE.
    pub handshake_timeout: Duration,
    /// Faults injected into outgoing FRAME messages.
    pub fault: Option<FaultConfig>,
}

impl Default for ProducerConfig {
    fn default() -> Self {
        Self {
            stream_id: 1,
            rate: 0.0,
            ack_timeout: Duration::from_millis(500),
            max_in_flight: 63,
            max_retries: 5,
            retry_delay: Duration::from_millis(200),
            handshake_timeout: Duration::from_secs(5),
            fault: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ProducerReport {
    pub stream_id: u32,
    pub frames: u64,
    /// First transmissions.
    pub sent: u64,
    pub retransmitted: u64,
    /// Distinct frames acknowledged.
    pub acked: u64,
    /// Reconnection attempts.
    pub retries: u32,
    pub injected_drops: u64,
    pub injected_duplicates: u64,
    pub injected_reorders: u64,
    pub elapsed_secs: f64,
    /// Tracker output for every frame, ascending.
    #[serde(skip)]
    pub results: Vec<FrameOutput>,
}

#[derive(Debug, Error)]
pub enum ProducerError {
    #[error("server unreachable after {} retries: {last_error}", report.retries)]
    Unreachable {
        last_error: String,
        report: Box<ProducerReport>,
    },
    #[error("server reported {code:?} on stream {stream_id}: {message}")]
    Rejected {
        stream_id: u32,
        code: ErrorCode,
        message: String,
        report: Box<ProducerReport>,
    },
    #[error("frames must be numbered 1..=n in order; position {index} holds frame {frame_no}")]
    BadSequence { index: usize, frame_no: u64 },
    #[error(transparent)]
    Encode(#[from] EncodeError),
}

impl ProducerError {
    pub fn report(&self) -> Option<&ProducerReport> {
        match self {
            Self::Unreachable { report, .. } | Self::Rejected { report, .. } => Some(report),
            _ => None,
        }
    }
}

/// Why a session ended early.
enum Broken {
    Io(String),
    Fatal(ProducerError),
}

impl From<std::io::Error> for Broken {
    fn from(e: std::io::Error) -> Self {
        Broken::Io(e.to_string())
    }
}

impl From<ProtocolError> for Broken {
    fn from(e: ProtocolError) -> Self {
        Broken::Io(format!("protocol: {e}"))
    }
}

struct Link {
    stream: TcpStream,
    decoder: Decoder,
    buf: Vec<u8>,
}

impl Link {
    fn connect(endpoint: &str) -> std::io::Result<Self> {
        let stream = TcpStream::connect(endpoint)?;
        stream.set_nodelay(true)?;
        stream.set_read_timeout(Some(READ_POLL))?;
        Ok(Self {
            stream,
            decoder: Decoder::new(),
            buf: vec![0u8; 64 * 1024],
        })
    }

    fn send(&mut self, bytes: &[u8]) -> std::io::Result<()> {
        self.stream.write_all(bytes)
    }

    /// Messages that arrived within one short poll.
    fn poll(&mut self) -> Result<Vec<Message>, Broken> {
        match self.stream.read(&mut self.buf) {
            Ok(0) => return Err(Broken::Io("server closed the connection".into())),
            Ok(n) => self.decoder.feed(&self.buf[..n]),
            Err(e) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut | ErrorKind::Interrupted) => {}
            Err(e) => return Err(e.into()),
        }
        let mut out = Vec::new();
        while let Some(m) = self.decoder.next_message()? {
            out.push(m);
        }
        Ok(out)
    }
}

struct Session<'a> {
    cfg: &'a ProducerConfig,
    encoded: Vec<Vec<u8>>,
    acked: Vec<bool>,
    sent_at: Vec<Option<Instant>>,
    first_sent: Vec<bool>,
    results: BTreeMap<u64, Vec<TrackOutput>>,
    report: ProducerReport,
    fault: Option<FaultyLink>,
    start: Instant,
}

impl Session<'_> {
    fn n(&self) -> u64 {
        self.encoded.len() as u64
    }

    fn first_unacked(&self) -> Option<u64> {
        self.acked.iter().position(|a| !a).map(|i| i as u64 + 1)
    }

    fn transmit(&mut self, link: &mut Link, f: u64) -> Result<(), Broken> {
        let i = (f - 1) as usize;
        if self.first_sent[i] {
            self.report.retransmitted += 1;
        } else {
            self.first_sent[i] = true;
            self.report.sent += 1;
        }
        self.sent_at[i] = Some(Instant::now());
        let bytes = self.encoded[i].clone();
        match self.fault.as_mut() {
            None => link.send(&bytes)?,
            Some(fl) => {
                for b in fl.transmit(bytes) {
                    link.send(&b)?;
                }
            }
        }
        Ok(())
    }

    fn absorb(&mut self, m: Message) -> Result<Option<Message>, Broken> {
        let sid = self.cfg.stream_id;
        match m {
            Message::Ack { stream_id, frame_no } if stream_id == sid => {
                if let Some(a) = self.acked.get_mut((frame_no - 1) as usize) {
                    if !*a {
                        *a = true;
                        self.report.acked += 1;
                    }
                }
                Ok(None)
            }
            Message::TrackResult {
                stream_id,
                frame_no,
                tracks,
            } if stream_id == sid => {
                self.results.insert(frame_no, tracks);
                Ok(None)
            }
            Message::Error {
                stream_id,
                code,
                message,
                ..
            } => Err(Broken::Fatal(ProducerError::Rejected {
                stream_id,
                code,
                message,
                report: Box::new(self.report.clone()),
            })),
            Message::Heartbeat => Ok(None),
            other => Ok(Some(other)),
        }
    }

    /// Waits for a reply matching `want`, absorbing acks and results on the way.
    fn await_reply(&mut self, link: &mut Link, want: impl Fn(&Message) -> bool) -> Result<Message, Broken> {
        let deadline = Instant::now() + self.cfg.handshake_timeout;
        while Instant::now() < deadline {
            for m in link.poll()? {
                if let Some(m) = self.absorb(m)? {
                    if want(&m) {
                        return Ok(m);
                    }
                }
            }
        }
        Err(Broken::Io("timed out waiting for the server".into()))
    }

    /// Opens the stream on a fresh connection and rewinds to the server's position.
    fn open(&mut self, link: &mut Link) -> Result<(), Broken> {
        let sid = self.cfg.stream_id;
        link.send(&encode_message(&Message::Hello {
            client: format!("skytrack-producer/{sid}"),
        })
        .map_err(|e| Broken::Fatal(e.into()))?)?;
        link.send(&encode_message(&Message::StreamOpen {
            stream_id: sid,
            resume_from: 0,
        })
        .map_err(|e| Broken::Fatal(e.into()))?)?;
        let reply = self.await_reply(link, |m| matches!(m, Message::StreamOpen { stream_id, .. } if *stream_id == sid))?;
        let Message::StreamOpen { resume_from, .. } = reply else {
            unreachable!("filtered above")
        };
        // Frames past the server's position must be processed again.
        for f in (resume_from + 1)..=self.n() {
            let i = (f - 1) as usize;
            if self.acked[i] {
                self.acked[i] = false;
                self.report.acked -= 1;
            }
        }
        self.sent_at.iter_mut().for_each(|s| *s = None);
        debug!("stream {sid} open, server at frame {resume_from}");
        Ok(())
    }

    /// Sends until every frame is acknowledged, then closes the stream.
    fn pump(&mut self, link: &mut Link) -> Result<(), Broken> {
        self.open(link)?;
        let mut next = self.first_unacked().unwrap_or(self.n() + 1);
        while let Some(first) = self.first_unacked() {
            next = next.max(first);
            let now = Instant::now();
            for f in first..next {
                let i = (f - 1) as usize;
                let late = self.sent_at[i].is_none_or(|t| now.duration_since(t) >= self.cfg.ack_timeout);
                if !self.acked[i] && late {
                    self.transmit(link, f)?;
                }
            }
            let mut progressed = false;
            while next <= self.n() && next - first < self.cfg.max_in_flight.max(1) {
                if self.cfg.rate > 0.0 {
                    let due = self.start + Duration::from_secs_f64((next - 1) as f64 / self.cfg.rate);
                    if Instant::now() < due {
                        break;
                    }
                }
                self.transmit(link, next)?;
                next += 1;
                progressed = true;
            }
            if !progressed {
                if let Some(held) = self.fault.as_mut().and_then(FaultyLink::flush) {
                    link.send(&held)?;
                }
            }
            for m in link.poll()? {
                self.absorb(m)?;
            }
        }
        let sid = self.cfg.stream_id;
        link.send(&encode_message(&Message::StreamClose {
            stream_id: sid,
            last_frame: self.n(),
        })
        .map_err(|e| Broken::Fatal(e.into()))?)?;
        self.await_reply(link, |m| matches!(m, Message::StreamClose { stream_id, .. } if *stream_id == sid))?;
        Ok(())
    }
}

/// Streams `frames` (numbered 1..=n) to `endpoint` and collects the results.
///
/// Lost connections are re-established up to `max_retries` times; the
/// producer then resumes from whichever is earlier, its oldest unacknowledged
/// frame or the frame after the server's restored position.
pub fn run_producer(frames: &[FrameInput], endpoint: &str, cfg: &ProducerConfig) -> Result<ProducerReport, ProducerError> {
    let mut encoded = Vec::with_capacity(frames.len());
    for (i, f) in frames.iter().enumerate() {
        if f.frame_no != i as u64 + 1 {
            return Err(ProducerError::BadSequence {
                index: i,
                frame_no: f.frame_no,
            });
        }
        let mut f = f.clone();
        f.stream_id = cfg.stream_id;
        encoded.push(encode_message(&Message::Frame(f))?);
    }
    let n = frames.len();
    let mut s = Session {
        cfg,
        encoded,
        acked: vec![false; n],
        sent_at: vec![None; n],
        first_sent: vec![false; n],
        results: BTreeMap::new(),
        report: ProducerReport {
            stream_id: cfg.stream_id,
            frames: n as u64,
            ..ProducerReport::default()
        },
        fault: cfg.fault.clone().map(FaultyLink::new),
        start: Instant::now(),
    };

    let mut attempt = 0u32;
    loop {
        let outcome = match Link::connect(endpoint) {
            Ok(mut link) => s.pump(&mut link),
            Err(e) => Err(Broken::Io(format!("connect to {endpoint}: {e}"))),
        };
        match outcome {
            Ok(()) => break,
            Err(Broken::Fatal(e)) => return Err(e),
            Err(Broken::Io(msg)) => {
                if attempt >= cfg.max_retries {
                    s.report.retries = attempt;
                    s.report.elapsed_secs = s.start.elapsed().as_secs_f64();
                    return Err(ProducerError::Unreachable {
                        last_error: msg,
                        report: Box::new(s.report),
                    });
                }
                attempt += 1;
                warn!("stream {}: {msg}; reconnecting ({attempt}/{})", cfg.stream_id, cfg.max_retries);
                std::thread::sleep(cfg.retry_delay);
            }
        }
    }

    s.report.retries = attempt;
    s.report.elapsed_secs = s.start.elapsed().as_secs_f64();
    if let Some(fl) = &s.fault {
        let c = fl.counts();
        s.report.injected_drops = c.dropped;
        s.report.injected_duplicates = c.duplicated;
        s.report.injected_reorders = c.reordered;
    }
    s.report.results = (1..=n as u64)
        .map(|f| FrameOutput {
            frame_no: f,
            tracks: s.results.remove(&f).unwrap_or_default(),
        })
        .collect();
    info!(
        "stream {}: {} frames, {} retransmitted, {} retries",
        cfg.stream_id, s.report.frames, s.report.retransmitted, s.report.retries
    );
    Ok(s.report)
}
