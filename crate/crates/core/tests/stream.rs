use std::time::{Duration, Instant};

use proptest::prelude::*;
use skytrack::stream::{
    checkpoint, decode_message, encode_message, restore, run_producer, CheckpointError, DecodeError, Decoder,
    ErrorCode, FaultConfig, Message, ProducerConfig, ProducerError, ProtocolError, Server, ServerConfig, HEADER_LEN,
};
use skytrack::io::write_results;
use skytrack::synth::{self, ScenarioConfig};
use skytrack::tracker::FrameOutput;
use skytrack::tracker::{run_sequence, TrackOutput, Tracker, TrackerConfig};
use skytrack::{BBox, Detection, FrameInput};

fn server(dir: &std::path::Path, workers: usize) -> Server {
    Server::start(ServerConfig {
        listen: "127.0.0.1:0".into(),
        worker_count: workers,
        checkpoint_dir: Some(dir.to_path_buf()),
        checkpoint_interval: 10,
        ..ServerConfig::default()
    })
    .unwrap()
}

/// Results as written to disk; the wire carries f32.
fn text(out: &[FrameOutput]) -> String {
    write_results(out)
}

fn offline(frames: &[FrameInput]) -> String {
    text(&run_sequence(TrackerConfig::default(), frames).unwrap())
}

fn scenario(seed: u64, frames: u64) -> Vec<FrameInput> {
    synth::generate(
        "s",
        &ScenarioConfig {
            seed,
            frames,
            objects: 8,
            ..ScenarioConfig::default()
        },
    )
    .frame_inputs(0)
}

#[test]
fn heartbeat_is_header_only() {
    let b = encode_message(&Message::Heartbeat).unwrap();
    assert_eq!(b.len(), HEADER_LEN);
    assert_eq!(&b[..4], b"RMTS");
    assert_eq!(&b[6..], &[0, 0, 0, 0]);
}

#[test]
fn one_detection_frame_body_is_39_bytes() {
    let f = FrameInput::new(3, 7, vec![Detection::new(BBox::new(1.0, 2.0, 3.0, 4.0), 0.5, 2)]);
    let b = encode_message(&Message::Frame(f.clone())).unwrap();
    assert_eq!(b.len(), HEADER_LEN + 39);
    let (m, used) = decode_message(&b).unwrap();
    assert_eq!(used, b.len());
    assert_eq!(m, Message::Frame(f));
}

#[test]
fn garbage_magic_is_fatal() {
    let mut d = Decoder::new();
    d.feed(b"XXXX\x01\x08\0\0\0\0");
    assert!(matches!(d.next_message(), Err(ProtocolError::BadMagic(_))));
    assert!(matches!(decode_message(b"RMX"), Err(DecodeError::Protocol(ProtocolError::BadMagic(_)))));
}

#[test]
fn reserved_type_is_rejected() {
    let mut b = encode_message(&Message::Heartbeat).unwrap();
    b[5] = 9;
    assert!(matches!(decode_message(&b), Err(DecodeError::Protocol(ProtocolError::ReservedType(_)))));
}

#[test]
fn truncated_input_is_incomplete() {
    let b = encode_message(&Message::Hello { client: "abc".into() }).unwrap();
    for cut in 0..b.len() {
        assert!(matches!(decode_message(&b[..cut]), Err(DecodeError::Incomplete(_))), "cut {cut}");
    }
}

fn arb_message() -> impl Strategy<Value = Message> {
    let det = (0.0f32..500.0, 0.0f32..500.0, 1.0f32..80.0, 1.0f32..80.0, 0.0f32..1.0, 0u16..4).prop_map(
        |(l, t, w, h, s, c)| Detection::new(BBox::new(l.into(), t.into(), w.into(), h.into()), s.into(), c),
    );
    let track = (1u32..1000, 0.0f32..500.0, 0.0f32..500.0, 1.0f32..80.0, 0.0f32..1.0, 0u16..4).prop_map(
        |(id, l, t, w, s, c)| TrackOutput {
            track_id: id,
            bbox: BBox::new(l.into(), t.into(), w.into(), w.into()),
            score: s.into(),
            class_id: c,
        },
    );
    prop_oneof![
        "[a-z]{0,12}".prop_map(|client| Message::Hello { client }),
        (any::<u32>(), any::<u64>()).prop_map(|(stream_id, resume_from)| Message::StreamOpen { stream_id, resume_from }),
        (any::<u32>(), 1u64..1_000_000, prop::collection::vec(det, 0..6))
            .prop_map(|(s, f, d)| Message::Frame(FrameInput::new(s, f, d))),
        (any::<u32>(), any::<u64>()).prop_map(|(stream_id, last_frame)| Message::StreamClose { stream_id, last_frame }),
        (any::<u32>(), 1u64..1_000_000).prop_map(|(stream_id, frame_no)| Message::Ack { stream_id, frame_no }),
        (any::<u32>(), 1u64..1_000_000, prop::collection::vec(track, 0..6))
            .prop_map(|(stream_id, frame_no, tracks)| Message::TrackResult { stream_id, frame_no, tracks }),
        (any::<u32>(), any::<u64>(), any::<u64>(), "[ -~]{0,20}").prop_map(|(stream_id, a, b, message)| {
            Message::Error {
                stream_id,
                code: ErrorCode::Gap,
                missing_from: a,
                missing_to: b,
                message,
            }
        }),
        Just(Message::Heartbeat),
    ]
}

proptest! {
    #[test]
    fn codec_round_trips(msgs in prop::collection::vec(arb_message(), 1..8)) {
        let mut stream = Vec::new();
        for m in &msgs {
            stream.extend(encode_message(m).unwrap());
        }
        let mut batch = Decoder::new();
        batch.feed(&stream);
        let mut bytewise = Decoder::new();
        let mut got = Vec::new();
        for b in &stream {
            bytewise.feed(std::slice::from_ref(b));
            while let Some(m) = bytewise.next_message().unwrap() {
                got.push(m);
            }
        }
        let mut all = Vec::new();
        while let Some(m) = batch.next_message().unwrap() {
            all.push(m);
        }
        prop_assert_eq!(&all, &msgs);
        prop_assert_eq!(&got, &msgs);
        prop_assert_eq!(bytewise.buffered(), 0);
    }
}

#[test]
fn restored_tracker_continues_identically() {
    let frames = synth::generate(
        "c",
        &ScenarioConfig {
            seed: 5,
            frames: 40,
            objects: 10,
            embedding_dim: Some(8),
            ..ScenarioConfig::default()
        },
    )
    .frame_inputs(0);
    let mut a = Tracker::new(TrackerConfig::botsort()).unwrap();
    for f in &frames[..30] {
        a.step(f).unwrap();
    }
    let snap = restore(&checkpoint(4, &a)).unwrap();
    assert_eq!(snap.stream_id, 4);
    assert_eq!(snap.frame_no(), 30);
    let mut b = snap.tracker;
    assert_eq!(a, b);
    for f in &frames[30..] {
        assert_eq!(a.step(f).unwrap(), b.step(f).unwrap());
    }
}

#[test]
fn fresh_tracker_round_trips() {
    let t = Tracker::new(TrackerConfig::default()).unwrap();
    assert_eq!(restore(&checkpoint(0, &t)).unwrap().tracker, t);
}

#[test]
fn corrupted_checkpoint_is_rejected() {
    let mut t = Tracker::new(TrackerConfig::default()).unwrap();
    for f in &scenario(2, 5) {
        t.step(f).unwrap();
    }
    let bytes = checkpoint(1, &t);
    for i in [5, bytes.len() / 2, bytes.len() - 1] {
        let mut b = bytes.clone();
        b[i] ^= 0x10;
        assert!(matches!(restore(&b), Err(CheckpointError::Checksum)), "byte {i}");
    }
    assert!(matches!(restore(b"nope"), Err(CheckpointError::BadMagic)));
}

#[test]
fn lossless_stream_matches_offline() {
    let dir = tempfile::tempdir().unwrap();
    let srv = server(dir.path(), 2);
    let frames = scenario(11, 60);
    let rep = run_producer(
        &frames,
        &srv.local_addr().to_string(),
        &ProducerConfig {
            stream_id: 3,
            ..ProducerConfig::default()
        },
    )
    .unwrap();
    assert_eq!(rep.retransmitted, 0);
    assert_eq!(rep.acked, 60);
    assert_eq!(text(&rep.results), offline(&frames));
    assert!(!dir.path().join("3.bin").exists());
    assert_eq!(srv.shutdown().total_frames(), 60);
}

#[test]
fn lossy_link_still_delivers_everything() {
    let dir = tempfile::tempdir().unwrap();
    let srv = server(dir.path(), 1);
    let frames = scenario(12, 80);
    let rep = run_producer(
        &frames,
        &srv.local_addr().to_string(),
        &ProducerConfig {
            ack_timeout: Duration::from_millis(100),
            fault: Some(FaultConfig {
                seed: 1,
                drop_every: Some(10),
                duplicate_probability: 0.1,
                reorder_probability: 0.1,
                ..FaultConfig::default()
            }),
            ..ProducerConfig::default()
        },
    )
    .unwrap();
    assert!(rep.injected_drops >= 8);
    assert!(rep.retransmitted >= rep.injected_drops);
    assert_eq!(text(&rep.results), offline(&frames));
    let stats = srv.shutdown();
    assert_eq!(stats.total_frames(), 80);
}

#[test]
fn pacing_honours_rate() {
    let dir = tempfile::tempdir().unwrap();
    let srv = server(dir.path(), 1);
    let t = Instant::now();
    run_producer(
        &scenario(3, 30),
        &srv.local_addr().to_string(),
        &ProducerConfig {
            rate: 10.0,
            ..ProducerConfig::default()
        },
    )
    .unwrap();
    assert!(t.elapsed() >= Duration::from_millis(2900), "{:?}", t.elapsed());
}

#[test]
fn concurrent_streams_are_independent() {
    let dir = tempfile::tempdir().unwrap();
    let srv = server(dir.path(), 2);
    let addr = srv.local_addr().to_string();
    let a = scenario(21, 50);
    let b = scenario(22, 50);
    let (ra, rb) = std::thread::scope(|s| {
        let ha = s.spawn(|| run_producer(&a, &addr, &ProducerConfig { stream_id: 1, ..ProducerConfig::default() }));
        let hb = s.spawn(|| run_producer(&b, &addr, &ProducerConfig { stream_id: 2, ..ProducerConfig::default() }));
        (ha.join().unwrap().unwrap(), hb.join().unwrap().unwrap())
    });
    assert_eq!(text(&ra.results), offline(&a));
    assert_eq!(text(&rb.results), offline(&b));
    let stats = srv.shutdown();
    assert!(stats.workers.iter().all(|w| w.frames == 50));
}

#[test]
fn crash_and_restart_resumes_from_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let srv = server(dir.path(), 1);
    let addr = srv.local_addr();
    let frames = scenario(31, 120);
    let expected = offline(&frames);
    let cfg = ProducerConfig {
        rate: 200.0,
        max_retries: 50,
        retry_delay: Duration::from_millis(50),
        ..ProducerConfig::default()
    };
    let rep = std::thread::scope(|s| {
        let h = s.spawn(|| run_producer(&frames, &addr.to_string(), &cfg));
        std::thread::sleep(Duration::from_millis(300));
        srv.kill();
        std::thread::sleep(Duration::from_millis(100));
        let again = Server::start(ServerConfig {
            listen: addr.to_string(),
            worker_count: 1,
            checkpoint_dir: Some(dir.path().to_path_buf()),
            checkpoint_interval: 10,
            ..ServerConfig::default()
        })
        .unwrap();
        let rep = h.join().unwrap().unwrap();
        again.shutdown();
        rep
    });
    assert!(rep.retries >= 1);
    assert_eq!(text(&rep.results), expected);
}

#[test]
fn dead_endpoint_reports_retries() {
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap();
    let err = run_producer(
        &scenario(1, 3),
        &port.to_string(),
        &ProducerConfig {
            max_retries: 2,
            retry_delay: Duration::from_millis(10),
            ..ProducerConfig::default()
        },
    )
    .unwrap_err();
    assert!(matches!(err, ProducerError::Unreachable { .. }));
    assert_eq!(err.report().unwrap().retries, 2);
    assert!(err.to_string().contains("2 retries"));
}
