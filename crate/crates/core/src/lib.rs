//! Upper bounds on the feedforward and feedback capacities of
//! non-controllable finite-state channels.
//!
//! The pipeline is: a [`ChannelSpec`] and a [`ContextSpace`] define the belief
//! simplex, [`dp::value_iteration`] optimizes a belief-conditioned Markov
//! source on a quantized grid, and [`mc::directed_info_rate`] evaluates the
//! resulting directed-information rate by simulation. The [`oracle`] module
//! checks the identities everything relies on by brute-force enumeration.

pub mod belief;
pub mod channel;
pub mod context;
pub mod dp;
pub mod error;
pub mod info;
pub mod mc;
pub mod oracle;

pub use belief::{AlphaVector, PolicyRow};
pub use channel::{ChannelSpec, InputConstraint};
pub use context::{ContextSpace, CONTEXT_ORDERING_VERSION};
pub use error::{Error, Result};
