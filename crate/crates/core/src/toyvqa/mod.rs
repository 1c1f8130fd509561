//! A small VQA classifier over region features and the two-domain
//! experiment that compares augmentation and alignment methods with it.

mod answers;
mod checkpoint;
mod experiment;
mod model;
mod train;

pub use answers::{build_answer_space, AnswerSpace, DEFAULT_DI_TOKENS};
pub use checkpoint::{load_trained, save_trained};
pub use experiment::{build_experiment_data, run_experiment, ExperimentConfig, ExperimentData, ExperimentResult, MethodSummary, RunResult};
pub use model::{region_matrix, tokenize, Batch, ModelShape, ToyModel};
pub use train::{encode_store, CodeNorm, evaluate, predict, train, EvalReport, Method, SplitScore, TrainConfig, TrainSet, Trained, Vocabulary};

#[cfg(test)]
mod tests;
