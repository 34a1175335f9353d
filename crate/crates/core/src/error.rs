use std::io;

use thiserror::Error;

/// Errors produced by the index and its storage tiers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("capacity exhausted: store holds at most {0} vectors")]
    CapacityExhausted(usize),

    #[error("vector {0} not found")]
    NotFound(u32),

    #[error("vector {0} was reclaimed by consolidation")]
    Reclaimed(u32),

    #[error("vertex {0} is not in the graph")]
    VertexNotFound(u32),

    #[error("hot slot {0} is out of range")]
    SlotOutOfRange(u32),

    #[error("hot slot {0} is occupied")]
    SlotOccupied(u32),

    #[error("hot slot {0} is free")]
    SlotFree(u32),

    #[error("vector {0} is already cached")]
    AlreadyCached(u32),

    #[error("vector {0} is cached in the hot tier")]
    HotVector(u32),

    #[error("no spill tier configured")]
    SpillNotConfigured,

    #[error("invalid neighbor list for {owner}: {reason}")]
    InvalidNeighbors { owner: u32, reason: String },

    #[error("version conflict on vertex {vertex}: expected {expected}, found {found}")]
    VersionConflict {
        vertex: u32,
        expected: u64,
        found: u64,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
