//! From-scratch differentiable numeric core.
//!
//! A tiny f64 tensor type, the layer zoo needed by the lab (framing, 1-D
//! convolution, max-pooling, a standard LSTM cell, dense), reverse-mode
//! gradients checked against central finite differences, Adam, and a binary
//! serialization format for trained networks. No external numeric crates;
//! hot loops are plain slices so the compiler can vectorize them.

pub mod adam;
pub mod array;
pub mod gradcheck;
pub mod io;
pub mod layer;
pub mod loss;
pub mod lstm;
pub mod network;

pub use adam::Adam;
pub use array::NdArray;
pub use gradcheck::{check_gradients, GradCheckReport};
pub use layer::{Activation, LayerSpec};
pub use network::{ForwardCache, Network, StreamState};
