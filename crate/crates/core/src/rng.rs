//! Named deterministic random streams.
//!
//! The root seed fans out into one ChaCha8 stream per consumer, so extra
//! draws in one component never shift the sequence seen by another. Stream
//! positions are serializable for checkpoints.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Consumers of randomness in the engine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stream {
    Action,
    Category,
    Instruction,
    Clustering,
    Retry,
}

impl Stream {
    pub const ALL: [Stream; 5] = [
        Stream::Action,
        Stream::Category,
        Stream::Instruction,
        Stream::Clustering,
        Stream::Retry,
    ];

    fn id(self) -> u64 {
        match self {
            Stream::Action => 1,
            Stream::Category => 2,
            Stream::Instruction => 3,
            Stream::Clustering => 4,
            Stream::Retry => 5,
        }
    }
}

/// The generator behind every stream.
pub type StreamRng = ChaCha8Rng;

/// Build the generator for one stream of a root seed.
pub fn stream_rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream.id());
    rng
}

/// Serializable stream positions (ChaCha word offsets).
pub type StreamPositions = BTreeMap<Stream, u128>;

/// The engine-owned streams. The retry stream lives in the LLM gateway.
#[derive(Debug, Clone)]
pub struct RngStreams {
    pub action: ChaCha8Rng,
    pub category: ChaCha8Rng,
    pub instruction: ChaCha8Rng,
    pub clustering: ChaCha8Rng,
}

impl RngStreams {
    pub fn new(seed: u64) -> Self {
        RngStreams {
            action: stream_rng(seed, Stream::Action),
            category: stream_rng(seed, Stream::Category),
            instruction: stream_rng(seed, Stream::Instruction),
            clustering: stream_rng(seed, Stream::Clustering),
        }
    }

    pub fn positions(&self) -> StreamPositions {
        [
            (Stream::Action, self.action.get_word_pos()),
            (Stream::Category, self.category.get_word_pos()),
            (Stream::Instruction, self.instruction.get_word_pos()),
            (Stream::Clustering, self.clustering.get_word_pos()),
        ]
        .into_iter()
        .collect()
    }

    /// Rebuild streams from a seed and saved positions.
    pub fn restore(seed: u64, positions: &StreamPositions) -> Self {
        let mut streams = RngStreams::new(seed);
        for (stream, rng) in [
            (Stream::Action, &mut streams.action),
            (Stream::Category, &mut streams.category),
            (Stream::Instruction, &mut streams.instruction),
            (Stream::Clustering, &mut streams.clustering),
        ] {
            if let Some(pos) = positions.get(&stream) {
                rng.set_word_pos(*pos);
            }
        }
        streams
    }
}
