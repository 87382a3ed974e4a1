//! Dense f64 math, layers with hand-written backward passes, parameter
//! storage, AdamW, finite-difference checking and checkpoint I/O.

pub mod array;
pub mod checkpoint;
pub mod gradcheck;
pub mod layers;
pub mod optim;
pub mod params;
pub mod softmax;

pub use array::{Array2, Array3};
pub use checkpoint::Checkpoint;
pub use gradcheck::{grad_check, GradCheckConfig, GradCheckReport};
pub use layers::{linear, linear_backward, Embedding, Gru, GruCache, Linear};
pub use optim::{clip_grad_norm, AdamW, AdamWConfig, StepOutcome, WarmupSchedule};
pub use params::{Gradients, ParamId, ParamStore, Parameter};
pub use softmax::{log_add, log_softmax, log_softmax_backward, log_softmax_into, log_sum_exp, LOG_ZERO};
