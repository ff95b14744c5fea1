//! Partitioned tracking server.
//!
//! Each connection gets a reader thread. Readers route work for stream `s`
//! to worker `s mod worker_count` through that worker's bounded queue, so a
//! stream's frames are always handled by one thread, in arrival order. The
//! worker restores order within the reorder window, drops duplicates, steps
//! the tracker and answers with TRACK_RESULT then ACK.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::io::{ErrorKind, Read, Write};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream};
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use log::{debug, info, warn};
use serde::Serialize;

use super::checkpoint::{checkpoint_path, load_checkpoint, save_checkpoint};
use super::queue::{BoundedQueue, OverloadPolicy, Pushed};
use super::wire::{encode_message, Decoder, ErrorCode, Message};
use super::StreamError;
use crate::geometry::FrameInput;
use crate::tracker::{TrackOutput, Tracker, TrackerConfig};

const POLL: Duration = Duration::from_millis(20);

#[derive(Debug, Clone, PartialEq)]
pub struct ServerConfig {
    pub listen: String,
    pub worker_count: usize,
    /// Per-worker queue length, in messages.
    pub queue_capacity: usize,
    /// Frames a stream may run ahead of its next expected frame.
    pub reorder_window: u64,
    /// Producers are expected to retransmit after this long; the server uses
    /// it as the write deadline for replies.
    pub ack_timeout: Duration,
    /// Frames between snapshots.
    pub checkpoint_interval: u64,
    pub overload_policy: OverloadPolicy,
    /// Where `<stream_id>.bin` snapshots go; `None` disables checkpointing.
    pub checkpoint_dir: Option<PathBuf>,
    pub tracker: TrackerConfig,
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self {
            listen: "127.0.0.1:7878".into(),
            worker_count: 2,
            queue_capacity: 256,
            reorder_window: 64,
            ack_timeout: Duration::from_millis(500),
            checkpoint_interval: 100,
            overload_policy: OverloadPolicy::Block,
            checkpoint_dir: Some(PathBuf::from("ckpt")),
            tracker: TrackerConfig::default(),
        }
    }
}

impl ServerConfig {
    pub fn validate(&self) -> Result<(), StreamError> {
        let bad = |m: &str| Err(StreamError::Config(m.to_string()));
        if self.worker_count == 0 {
            return bad("worker_count must be positive");
        }
        if self.reorder_window == 0 {
            return bad("reorder_window must be positive");
        }
        if (self.queue_capacity as u64) < self.reorder_window {
            return bad("queue_capacity must be at least reorder_window");
        }
        if self.checkpoint_interval == 0 {
            return bad("checkpoint_interval must be positive");
        }
        self.tracker
            .validate()
            .map_err(|e| StreamError::Config(e.to_string()))
    }
}

/// Counters of one worker.
#[derive(Debug, Default)]
struct WorkerCounters {
    frames: AtomicU64,
    duplicates: AtomicU64,
    dropped: AtomicU64,
    gaps: AtomicU64,
    rejected: AtomicU64,
    checkpoints: AtomicU64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct WorkerStats {
    /// Frames stepped through a tracker.
    pub frames: u64,
    /// Frames already processed that arrived again.
    pub duplicates: u64,
    /// Frames evicted from a full queue.
    pub dropped: u64,
    /// Streams halted by a gap wider than the reorder window.
    pub gaps: u64,
    /// Frames whose content the tracker rejected.
    pub rejected: u64,
    pub checkpoints: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ServerStats {
    pub workers: Vec<WorkerStats>,
}

impl ServerStats {
    pub fn total_frames(&self) -> u64 {
        self.workers.iter().map(|w| w.frames).sum()
    }
}

/// Write half of a client connection, shared by the workers that reply on it.
struct Conn {
    writer: Mutex<TcpStream>,
    alive: AtomicBool,
}

impl Conn {
    fn send(&self, m: &Message) {
        if !self.alive.load(Ordering::Acquire) {
            return;
        }
        let bytes = match encode_message(m) {
            Ok(b) => b,
            Err(e) => {
                warn!("dropping unencodable reply: {e}");
                return;
            }
        };
        let mut w = self.writer.lock().expect("connection lock");
        if let Err(e) = w.write_all(&bytes) {
            debug!("connection write failed: {e}");
            self.alive.store(false, Ordering::Release);
        }
    }

    fn close(&self) {
        self.alive.store(false, Ordering::Release);
        if let Ok(w) = self.writer.lock() {
            let _ = w.shutdown(Shutdown::Both);
        }
    }
}

enum Work {
    Open { stream_id: u32, conn: Arc<Conn> },
    Frame { frame: FrameInput, conn: Arc<Conn> },
    Close { stream_id: u32, conn: Arc<Conn> },
}

impl Work {
    fn droppable(&self) -> bool {
        matches!(self, Work::Frame { .. })
    }
}

struct Shared {
    cfg: ServerConfig,
    queues: Vec<BoundedQueue<Work>>,
    counters: Vec<WorkerCounters>,
    stop: AtomicBool,
    crash: AtomicBool,
    conns: Mutex<Vec<Arc<Conn>>>,
    readers: Mutex<Vec<JoinHandle<()>>>,
}

impl Shared {
    fn halted(&self) -> bool {
        self.stop.load(Ordering::Acquire) || self.crash.load(Ordering::Acquire)
    }
}

/// A running server. Dropping it without `shutdown` or `kill` kills it.
pub struct Server {
    addr: SocketAddr,
    shared: Arc<Shared>,
    acceptor: Option<JoinHandle<()>>,
    workers: Vec<JoinHandle<()>>,
}

impl Server {
    /// Binds the listener and starts the acceptor and worker threads.
    pub fn start(cfg: ServerConfig) -> Result<Self, StreamError> {
        cfg.validate()?;
        let listener = TcpListener::bind(&cfg.listen)?;
        listener.set_nonblocking(true)?;
        let addr = listener.local_addr()?;
        let shared = Arc::new(Shared {
            queues: (0..cfg.worker_count)
                .map(|_| BoundedQueue::new(cfg.queue_capacity, cfg.overload_policy))
                .collect(),
            counters: (0..cfg.worker_count).map(|_| WorkerCounters::default()).collect(),
            cfg,
            stop: AtomicBool::new(false),
            crash: AtomicBool::new(false),
            conns: Mutex::new(Vec::new()),
            readers: Mutex::new(Vec::new()),
        });
        let workers = (0..shared.cfg.worker_count)
            .map(|i| {
                let s = Arc::clone(&shared);
                std::thread::Builder::new()
                    .name(format!("worker-{i}"))
                    .spawn(move || Worker::new(i, s).run())
            })
            .collect::<Result<Vec<_>, _>>()?;
        let s = Arc::clone(&shared);
        let acceptor = std::thread::Builder::new()
            .name("acceptor".into())
            .spawn(move || accept_loop(listener, s))?;
        info!("listening on {addr} with {} workers", shared.cfg.worker_count);
        Ok(Self {
            addr,
            shared,
            acceptor: Some(acceptor),
            workers,
        })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn stats(&self) -> ServerStats {
        ServerStats {
            workers: self
                .shared
                .counters
                .iter()
                .map(|c| WorkerStats {
                    frames: c.frames.load(Ordering::Relaxed),
                    duplicates: c.duplicates.load(Ordering::Relaxed),
                    dropped: c.dropped.load(Ordering::Relaxed),
                    gaps: c.gaps.load(Ordering::Relaxed),
                    rejected: c.rejected.load(Ordering::Relaxed),
                    checkpoints: c.checkpoints.load(Ordering::Relaxed),
                })
                .collect(),
        }
    }

    /// Stops accepting, drains queued work, writes a final snapshot of every
    /// open stream and joins all threads.
    pub fn shutdown(mut self) -> ServerStats {
        self.shared.stop.store(true, Ordering::Release);
        self.join_io();
        for q in &self.shared.queues {
            q.close();
        }
        for w in self.workers.drain(..) {
            let _ = w.join();
        }
        self.stats()
    }

    /// Simulates a crash: every thread stops at once and nothing is flushed.
    pub fn kill(mut self) {
        self.crash_now();
    }

    fn crash_now(&mut self) {
        self.shared.crash.store(true, Ordering::Release);
        for q in &self.shared.queues {
            q.close();
        }
        self.join_io();
        for w in self.workers.drain(..) {
            let _ = w.join();
        }
    }

    fn join_io(&mut self) {
        if let Some(a) = self.acceptor.take() {
            let _ = a.join();
        }
        for c in self.shared.conns.lock().expect("connections lock").drain(..) {
            c.close();
        }
        let readers: Vec<_> = self.shared.readers.lock().expect("readers lock").drain(..).collect();
        for r in readers {
            let _ = r.join();
        }
    }
}

impl Drop for Server {
    fn drop(&mut self) {
        if self.acceptor.is_some() || !self.workers.is_empty() {
            self.crash_now();
        }
    }
}

fn accept_loop(listener: TcpListener, shared: Arc<Shared>) {
    while !shared.halted() {
        match listener.accept() {
            Ok((stream, peer)) => {
                debug!("connection from {peer}");
                if let Err(e) = spawn_reader(stream, &shared) {
                    warn!("could not serve {peer}: {e}");
                }
            }
            Err(e) if e.kind() == ErrorKind::WouldBlock => std::thread::sleep(Duration::from_millis(5)),
            Err(e) => {
                warn!("accept failed: {e}");
                std::thread::sleep(Duration::from_millis(50));
            }
        }
    }
}

fn spawn_reader(stream: TcpStream, shared: &Arc<Shared>) -> std::io::Result<()> {
    stream.set_nonblocking(false)?;
    stream.set_nodelay(true)?;
    stream.set_read_timeout(Some(POLL))?;
    stream.set_write_timeout(Some(shared.cfg.ack_timeout.max(Duration::from_millis(100)) * 10))?;
    let conn = Arc::new(Conn {
        writer: Mutex::new(stream.try_clone()?),
        alive: AtomicBool::new(true),
    });
    shared.conns.lock().expect("connections lock").push(Arc::clone(&conn));
    let s = Arc::clone(shared);
    let h = std::thread::Builder::new()
        .name("reader".into())
        .spawn(move || read_loop(stream, conn, s))?;
    shared.readers.lock().expect("readers lock").push(h);
    Ok(())
}

fn protocol_error(conn: &Conn, stream_id: u32, message: String) {
    conn.send(&Message::Error {
        stream_id,
        code: ErrorCode::Protocol,
        missing_from: 0,
        missing_to: 0,
        message,
    });
}

fn read_loop(mut stream: TcpStream, conn: Arc<Conn>, shared: Arc<Shared>) {
    let mut decoder = Decoder::new();
    let mut buf = vec![0u8; 64 * 1024];
    let n = shared.cfg.worker_count as u64;
    'conn: while !shared.halted() && conn.alive.load(Ordering::Acquire) {
        match stream.read(&mut buf) {
            Ok(0) => break,
            Ok(k) => decoder.feed(&buf[..k]),
            Err(e) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut | ErrorKind::Interrupted) => {
                continue
            }
            Err(_) => break,
        }
        loop {
            let m = match decoder.next_message() {
                Ok(Some(m)) => m,
                Ok(None) => break,
                Err(e) => {
                    protocol_error(&conn, 0, e.to_string());
                    break 'conn;
                }
            };
            let (stream_id, work) = match m {
                Message::Hello { client } => {
                    debug!("hello from {client}");
                    conn.send(&Message::Hello {
                        client: "skytrack-server".into(),
                    });
                    continue;
                }
                Message::Heartbeat => {
                    conn.send(&Message::Heartbeat);
                    continue;
                }
                Message::StreamOpen { stream_id, .. } => (
                    stream_id,
                    Work::Open {
                        stream_id,
                        conn: Arc::clone(&conn),
                    },
                ),
                Message::Frame(frame) => (
                    frame.stream_id,
                    Work::Frame {
                        frame,
                        conn: Arc::clone(&conn),
                    },
                ),
                Message::StreamClose { stream_id, .. } => (
                    stream_id,
                    Work::Close {
                        stream_id,
                        conn: Arc::clone(&conn),
                    },
                ),
                other => {
                    protocol_error(&conn, 0, format!("{:?} is not a client message", other.message_type()));
                    break 'conn;
                }
            };
            let w = (u64::from(stream_id) % n) as usize;
            match shared.queues[w].push(work, Work::droppable) {
                Pushed::Queued => {}
                Pushed::Evicted => {
                    shared.counters[w].dropped.fetch_add(1, Ordering::Relaxed);
                }
                Pushed::Closed => break 'conn,
            }
        }
    }
    conn.close();
}

/// Per-stream state owned by one worker.
struct StreamState {
    tracker: Tracker,
    pending: BTreeMap<u64, FrameInput>,
    recent: VecDeque<(u64, Vec<TrackOutput>)>,
    conn: Arc<Conn>,
    halted: bool,
}

struct Worker {
    index: usize,
    shared: Arc<Shared>,
    streams: HashMap<u32, StreamState>,
}

impl Worker {
    fn new(index: usize, shared: Arc<Shared>) -> Self {
        Self {
            index,
            shared,
            streams: HashMap::new(),
        }
    }

    fn counters(&self) -> &WorkerCounters {
        &self.shared.counters[self.index]
    }

    fn run(mut self) {
        loop {
            if self.shared.crash.load(Ordering::Acquire) {
                return;
            }
            let item = self.shared.queues[self.index].pop_timeout(POLL);
            match item {
                Some(w) => self.handle(w),
                None => {
                    if self.shared.queues[self.index].is_closed() {
                        break;
                    }
                }
            }
        }
        if !self.shared.crash.load(Ordering::Acquire) {
            self.flush_all();
        }
    }

    fn flush_all(&mut self) {
        let ids: Vec<u32> = self.streams.keys().copied().collect();
        for id in ids {
            self.save(id);
        }
    }

    fn save(&self, stream_id: u32) {
        let (Some(dir), Some(st)) = (&self.shared.cfg.checkpoint_dir, self.streams.get(&stream_id)) else {
            return;
        };
        match save_checkpoint(dir, stream_id, &st.tracker) {
            Ok(_) => {
                self.counters().checkpoints.fetch_add(1, Ordering::Relaxed);
            }
            Err(e) => warn!("stream {stream_id}: checkpoint failed: {e}"),
        }
    }

    fn handle(&mut self, work: Work) {
        match work {
            Work::Open { stream_id, conn } => self.open(stream_id, conn),
            Work::Frame { frame, conn } => self.frame(frame, &conn),
            Work::Close { stream_id, conn } => self.close(stream_id, &conn),
        }
    }

    fn open(&mut self, stream_id: u32, conn: Arc<Conn>) {
        if !self.streams.contains_key(&stream_id) {
            let restored = match &self.shared.cfg.checkpoint_dir {
                Some(dir) => match load_checkpoint(dir, stream_id) {
                    Ok(s) => s.map(|s| s.tracker),
                    Err(e) => {
                        conn.send(&Message::Error {
                            stream_id,
                            code: ErrorCode::Internal,
                            missing_from: 0,
                            missing_to: 0,
                            message: format!("cannot restore stream {stream_id}: {e}"),
                        });
                        return;
                    }
                },
                None => None,
            };
            let tracker = match restored {
                Some(t) => {
                    info!("stream {stream_id}: restored at frame {}", t.frame_no());
                    t
                }
                None => Tracker::new(self.shared.cfg.tracker).expect("config validated at start"),
            };
            self.streams.insert(
                stream_id,
                StreamState {
                    tracker,
                    pending: BTreeMap::new(),
                    recent: VecDeque::new(),
                    conn: Arc::clone(&conn),
                    halted: false,
                },
            );
        }
        let st = self.streams.get_mut(&stream_id).expect("inserted above");
        st.conn = Arc::clone(&conn);
        st.pending.clear();
        conn.send(&Message::StreamOpen {
            stream_id,
            resume_from: st.tracker.frame_no(),
        });
    }

    fn frame(&mut self, frame: FrameInput, conn: &Arc<Conn>) {
        let stream_id = frame.stream_id;
        let window = self.shared.cfg.reorder_window;
        let interval = self.shared.cfg.checkpoint_interval;
        let Some(st) = self.streams.get_mut(&stream_id) else {
            protocol_error(conn, stream_id, format!("stream {stream_id} is not open"));
            return;
        };
        if st.halted {
            return;
        }
        let counters = &self.shared.counters[self.index];
        let last = st.tracker.frame_no();
        let f = frame.frame_no;
        if f <= last || st.pending.contains_key(&f) {
            counters.duplicates.fetch_add(1, Ordering::Relaxed);
            if f <= last {
                if let Some((_, tracks)) = st.recent.iter().find(|(n, _)| *n == f) {
                    st.conn.send(&Message::TrackResult {
                        stream_id,
                        frame_no: f,
                        tracks: tracks.clone(),
                    });
                }
                st.conn.send(&Message::Ack { stream_id, frame_no: f });
            }
            return;
        }
        if f - last > window {
            counters.gaps.fetch_add(1, Ordering::Relaxed);
            st.halted = true;
            warn!("stream {stream_id}: frames {}..={} missing beyond the reorder window", last + 1, f - 1);
            st.conn.send(&Message::Error {
                stream_id,
                code: ErrorCode::Gap,
                missing_from: last + 1,
                missing_to: f - 1,
                message: format!("frame {f} arrived while frame {} is missing", last + 1),
            });
            return;
        }
        st.pending.insert(f, frame);
        let mut save = false;
        while let Some(next) = st.pending.remove(&(st.tracker.frame_no() + 1)) {
            match st.tracker.step(&next) {
                Ok(out) => {
                    counters.frames.fetch_add(1, Ordering::Relaxed);
                    st.conn.send(&Message::TrackResult {
                        stream_id,
                        frame_no: out.frame_no,
                        tracks: out.tracks.clone(),
                    });
                    st.conn.send(&Message::Ack {
                        stream_id,
                        frame_no: out.frame_no,
                    });
                    st.recent.push_back((out.frame_no, out.tracks));
                    if st.recent.len() as u64 > 2 * window {
                        st.recent.pop_front();
                    }
                    save |= out.frame_no % interval == 0;
                }
                Err(e) => {
                    counters.rejected.fetch_add(1, Ordering::Relaxed);
                    st.halted = true;
                    st.conn.send(&Message::Error {
                        stream_id,
                        code: ErrorCode::InvalidInput,
                        missing_from: 0,
                        missing_to: 0,
                        message: format!("frame {}: {e}", next.frame_no),
                    });
                    break;
                }
            }
        }
        if save {
            self.save(stream_id);
        }
    }

    fn close(&mut self, stream_id: u32, conn: &Arc<Conn>) {
        let last = self.streams.remove(&stream_id).map_or(0, |s| s.tracker.frame_no());
        if let Some(dir) = &self.shared.cfg.checkpoint_dir {
            let _ = std::fs::remove_file(checkpoint_path(dir, stream_id));
        }
        conn.send(&Message::StreamClose {
            stream_id,
            last_frame: last,
        });
    }
}
