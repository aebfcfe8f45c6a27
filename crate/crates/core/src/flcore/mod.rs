//! Desk-scale federated training: softmax regression, local updates,
//! aggregation and the round loop.

pub mod model;
pub mod round;
pub mod update;

pub use model::{evaluate, loss_and_grad, ModelWeights, Proximal};
pub use round::{RoundRecord, Simulation, TrainingTask};
pub use update::{aggregate, local_update, UpdateConfig};
