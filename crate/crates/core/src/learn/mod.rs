//! Learned backjumping: a reverse-mode autodiff tape, the graph state
//! encoder with imitation and feasibility heads, training, and the heuristic
//! wrappers used by the solvers.

pub mod heuristic;
pub mod model;
pub mod tape;
pub mod train;

pub use heuristic::{IlHeuristic, PfHeuristic};
pub use model::{
    config_fingerprint, encode_state, il_predict, pf_predict, select_kstar_pf, Aggregator, Head, HeuristicParams,
    ModelConfig, StateGraph,
};
pub use train::{grad_check, train, train_from, Dataset, IlExample, Optimizer, PfExample, TrainConfig, TrainReport};
