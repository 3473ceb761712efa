pub mod analyze;
pub mod codec;
pub mod eval;
pub mod learn;
pub mod size;
pub mod sweep;

use ccemb_core::LearnerConfig;

use crate::args::TrainOpts;

pub fn learner_config(m: usize, k: usize, epochs: usize, seed: u64, opts: &TrainOpts) -> LearnerConfig {
    let mut cfg = LearnerConfig::new(m, k);
    cfg.epochs = epochs;
    cfg.seed = seed;
    cfg.batch_size = opts.batch_size;
    cfg.learning_rate = opts.learning_rate;
    cfg.temperature = opts.temperature;
    cfg.restarts = opts.restarts;
    if let Some(h) = opts.hidden_dim {
        cfg.hidden_dim = h;
    }
    cfg
}
