//! Reverse-mode differentiation with gradient-of-gradient support, and the
//! small classifier family used for clients and surrogates.

mod data;
mod graph;
mod model;
mod optim;

pub use data::{synthetic_dataset, uniform_dataset, ProbeDataset, ProbeSource};
pub use graph::{Graph, Var};
pub use model::{
    build_model, hard_cross_entropy, soft_cross_entropy, Activation, LayerSpec, MatchGrad,
    ModelInstance, ModelSpec, Target,
};
pub use optim::Adam;
