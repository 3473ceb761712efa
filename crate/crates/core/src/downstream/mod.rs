//! A small joint intent/slot classifier used to compare original and
//! compressed embeddings on a downstream task.

mod classifier;
mod dataset;

pub use classifier::{
    evaluate, train_classifier, ClassifierConfig, EmbeddingSource, EvalResult, HeadParams, JointClassifier,
    EVAL_CSV_HEADER,
};
pub use dataset::{toy_dataset, LabelSet, ParsingDataset, ParsingExample, TOY_SEED, TOY_SIZE};
