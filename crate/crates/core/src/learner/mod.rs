//! Learning codebooks and discrete codes by gradient descent through a
//! Gumbel-softmax relaxation of the code choice.

mod config;
mod model;
pub mod relax;
mod train;

pub use config::{attempt_seed, default_hidden_dim, LearnerConfig};
pub use model::{extract_codes, CodeModel, Params};
pub use relax::{gumbel_noise, reconstruct_soft, soft_assign};
pub use train::{continue_training, train, train_with, LossTrace};
