//! Small convolutional classifier with hand-written backpropagation.

mod arch;
mod checkpoint;
mod loss;
mod model;
mod optim;
mod tensor;
mod train;

pub use arch::{ArchWidths, Architecture, LayerSpec, Padding};
pub use checkpoint::{
    load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_MAGIC,
    CHECKPOINT_VERSION,
};
pub use loss::{argmax_rows, cross_entropy, softmax};
pub use model::{init_model, LayerParams, ModelParams, Trace};
pub use optim::{adam_step, sgd_step, OptimizerConfig, OptimizerKind, OptimizerState};
pub use tensor::Tensor;
pub use train::{
    add_prox_gradient, evaluate, full_gradient, make_batch, predict, train, train_with_state, Evaluation,
    TrainConfig,
};
