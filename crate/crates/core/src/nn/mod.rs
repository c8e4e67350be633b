//! Small dense-network engine: row-batched tensors, MLP chains with manual
//! reverse-mode gradients, Adam, and the step embedding.

mod adam;
mod embedding;
mod mlp;
mod tensor;

pub use adam::Adam;
pub use embedding::{time_embedding, write_time_embedding};
pub(crate) use mlp::write_row;
pub use mlp::{gelu, gelu_derivative, Activation, Dense, Gradients, Mlp, TextReader};
pub use tensor::Tensor2;
