//! Multilayer perceptrons trained with Adam, plus the loss primitives the
//! offline algorithms are assembled from.

mod adam;
mod ensemble;
pub mod loss;
mod mlp;

pub use adam::{Adam, AdamConfig};
pub use ensemble::{EnsembleForward, EnsembleSnapshot, QEnsemble};
pub use mlp::{ForwardCache, Mlp};
