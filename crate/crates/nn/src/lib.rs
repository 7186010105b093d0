//! Dense 2-D `f64` tensors with tape-based reverse-mode differentiation,
//! LSTM layers, Adam, finite-difference gradient checking and checkpoints.

pub mod checkpoint;
pub mod gradcheck;
pub mod graph;
pub mod layers;
pub mod optim;
pub mod params;
pub mod tensor;

pub use gradcheck::{check_graph, grad_check, GradCheckReport, DEFAULT_STEP};
pub use graph::{softmax_vec, Graph, Var};
pub use layers::{bilstm, lstm_step, positional_encoding, BiLstm, BiStates, Embedding, Linear, Lstm};
pub use optim::{Adam, AdamConfig};
pub use params::{Grads, ParamId, ParamStore};
pub use tensor::{sigmoid, NnError, Tensor};
