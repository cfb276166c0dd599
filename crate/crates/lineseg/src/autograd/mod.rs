//! Minimal dense-grid engine with reverse-mode differentiation.
//!
//! A [`Grid`] is the single tensor type; a [`Tape`] records eager forward
//! operations and replays them in reverse for gradients. [`ParamStore`]
//! holds named parameters with Adam moment buffers, and the checkpoint
//! functions persist them with a JSON manifest.
//!
//! Training confines a tape to one execution context; forward-only
//! inference on frozen parameters is safe to run concurrently.

mod checkpoint;
mod grid;
mod optim;
mod tape;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use grid::Grid;
pub use optim::ParamStore;
pub use tape::{Gradients, NodeId, Tape};
