//! Desk-scale FedAvg: a ReLU MLP trained with SGD on softmax cross-entropy,
//! size-weighted gradient aggregation and the data partitioning schemes.

mod data;
mod fedavg;
mod idx;
mod model;
mod partition;

pub use data::{Dataset, Split, NUM_CLASSES};
pub use fedavg::aggregate;
pub use idx::{parse_idx, IMAGE_MAGIC, LABEL_MAGIC};
pub use model::{
    batch_gradient, evaluate, init_model, local_train, loss, predict, Architecture, LocalUpdate,
    ModelParams, TrainSpec,
};
pub use partition::{partition, DataPartition, PartitionScheme};
