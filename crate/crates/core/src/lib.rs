//! Compositional code embeddings.
//!
//! A `|V| x D` embedding table is replaced by `M` codebooks of `K` basis
//! vectors each and one `M`-length discrete code per token; a token's vector
//! is the sum of the basis vectors its code selects. This crate learns the
//! codes and codebooks, stores them bit-packed, accounts for the storage
//! saved, measures reconstruction fidelity, and evaluates a small joint
//! intent/slot classifier on original versus compressed embeddings.

pub mod analysis;
mod binio;
pub mod bitpack;
pub mod compressed;
pub mod downstream;
pub mod embedding_io;
mod error;
pub mod learner;
pub mod optim;
pub mod registry;
pub mod size;

pub use analysis::{fidelity_suite, mean_euclidean_distance, mse, nn_overlap, FidelityReport};
pub use bitpack::{pack_codes, unpack_codes};
pub use compressed::{compress, CompressedEmbedding};
pub use embedding_io::{
    load_table, save_table, synth_gaussian_table, synth_planted_table, EmbeddingTable, PlantedTable,
};
pub use error::{Error, ErrorKind, Result};
pub use learner::{extract_codes, train, CodeModel, LearnerConfig, LossTrace};
pub use size::{size_report, SizeReport};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The RNG used everywhere a seed is accepted.
pub type SeededRng = ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}
