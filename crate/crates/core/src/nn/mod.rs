//! Small differentiable model: MLP encoder, normalised projector, cosine
//! classifier, momentum SGD with a cosine schedule, and gradient checking.

mod checkpoint;
mod gradcheck;
mod linear;
mod model;
mod optim;

pub use checkpoint::{Checkpoint, NamedTensor, CHECKPOINT_FORMAT};
pub use gradcheck::{grad_check, relative_error, GradCheckReport, FD_STEP};
pub use linear::{Linear, Mlp, MlpCache};
pub use model::{
    ClassifierPass, CosineClassifier, EncoderPass, Model, ModelConfig, Part, ProjectorPass,
};
pub use optim::{cosine_lr, sgd_update, Sgd, TrainSchedule};
