//! Streaming service: a length-prefixed binary protocol over TCP, a
//! partitioned worker pool running one tracker per stream, checkpoints for
//! crash recovery, and a producer with at-least-once delivery.
//!
//! Frames may arrive duplicated or out of order; each worker buffers up to
//! the reorder window and processes every stream strictly in frame order, so
//! the streamed output equals the offline output for the same input.

mod checkpoint;
mod fault;
mod producer;
mod queue;
mod server;
mod wire;

use thiserror::Error;

pub use checkpoint::{
    checkpoint, checkpoint_path, load_checkpoint, restore, save_checkpoint, CheckpointError, Snapshot,
    CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use fault::{FaultConfig, FaultCounts, FaultyLink};
pub use producer::{run_producer, ProducerConfig, ProducerError, ProducerReport};
pub use queue::{BoundedQueue, OverloadPolicy, Pushed};
pub use server::{Server, ServerConfig, ServerStats, WorkerStats};
pub use wire::{
    decode_message, encode_message, DecodeError, Decoder, EncodeError, ErrorCode, Message, MessageType,
    ProtocolError, HEADER_LEN, MAGIC, MAX_MESSAGE_LEN, RESERVED_PIXEL_FRAME, VERSION,
};

#[derive(Debug, Error)]
pub enum StreamError {
    #[error("invalid server configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
}
