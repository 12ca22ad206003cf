//! Nested automatic differentiation: forward second-order jets for the
//! time/state derivatives entering the PDE operator, and a reverse tape
//! over the jet computation for exact parameter gradients.

mod jet;
mod kernels;
mod tape;

pub use jet::{jet_lift, Jet2};
pub use kernels::{ncomp, pack_sym};
pub use tape::{NodeId, NodeRange, Tape};
